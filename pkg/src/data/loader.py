import logging
from pathlib import Path
from typing import List, Optional

import pandas as pd

from src.utils.helpers import ensure_directory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


class CsvLoader:
    """
    Writes result tables (evaluation reports, training logs, profiles) as CSV
    files into one output folder. Floats keep 17 significant digits.
    """

    def __init__(self, output_path: Optional[str] = None):
        if output_path:
            self.output_path = Path(output_path)
        else:
            self.output_path = Path("data/output")
        ensure_directory(self.output_path)
        logger.info(f"Output directory set to: {self.output_path.resolve()}")

    def save_to_csv(self, df: pd.DataFrame, name: str, field_order: Optional[List[str]] = None) -> Path:
        """
        Write df to <output_path>/<name>.csv (no index). Overwrites if it already exists.
        """
        output_file = self.output_path / f"{name}.csv"
        try:
            if field_order is not None:
                df = df[field_order]
            df.to_csv(output_file, index=False, float_format=FLOAT_FORMAT)
            logger.info(f"Saved {name}.csv ({len(df)} rows) to {output_file}")
        except Exception as ex:
            logger.error(f"Failed to save {name} to CSV: {ex}")
            raise
        return output_file
