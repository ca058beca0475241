import os
from typing import Any

import yaml
from loguru import logger

current_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(current_dir)
config_path = os.path.join(project_root, "modulation_lab_config.yaml")

try:
    with open(config_path, "r") as file:
        CONFIG = yaml.safe_load(file) or {}
except Exception:
    logger.critical("Config file not found, using empty defaults")
    logger.debug(f"Looked in {config_path}")
    CONFIG = {}

# ROOT DATA FOLDER
DATA_FOLDER = os.environ.get("MODLAB_DATA_FOLDER", "./data")

# RESULTS FOLDER
RESULTS_FOLDER = f"{DATA_FOLDER}/results"


def setting(section: str, key: str, default: Any) -> Any:
    """Look up ``section.key`` in the project defaults."""
    value = CONFIG.get(section, {}) or {}
    return value.get(key, default)
