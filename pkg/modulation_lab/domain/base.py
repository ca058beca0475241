import os
from typing import ClassVar, Type, TypeVar

import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict

from modulation_lab.exceptions import FileOperationError, InvalidInputError
from modulation_lab.utils import ensure_folder

T = TypeVar("T", bound="ArtifactModel")


class ArtifactModel(BaseModel):
    """A result record that persists itself as a CSV table in an output folder."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    artifact_name: ClassVar[str] = ""

    def to_frame(self) -> pd.DataFrame:
        raise NotImplementedError

    def artifact_path(self, out_dir: str, suffix: str = "") -> str:
        if not self.artifact_name:
            raise InvalidInputError(
                "save() must be called from a specific artifact class"
            )
        return os.path.join(out_dir, f"{self.artifact_name}{suffix}.csv")

    def save(self, out_dir: str, suffix: str = "") -> str:
        path = self.artifact_path(out_dir, suffix)
        try:
            ensure_folder(out_dir)
            self.to_frame().to_csv(path, index=False, float_format="%.17g")
        except InvalidInputError:
            raise
        except Exception as e:
            logger.error(f"Error saving {self.artifact_name} to {path}: {str(e)}")
            logger.exception(e)
            raise FileOperationError(e)
        logger.info(f"Wrote {path}")
        return path

    @classmethod
    def load_frame(cls: Type[T], out_dir: str, suffix: str = "") -> pd.DataFrame:
        if not cls.artifact_name:
            raise InvalidInputError(
                "load_frame() must be called from a specific artifact class"
            )
        path = os.path.join(out_dir, f"{cls.artifact_name}{suffix}.csv")
        try:
            return pd.read_csv(path)
        except Exception as e:
            logger.error(f"Error reading {path}: {str(e)}")
            raise FileOperationError(e)
