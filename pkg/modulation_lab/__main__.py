import sys

from modulation_lab.cli import main

sys.exit(main())
