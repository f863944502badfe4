from dataclasses import dataclass
from pathlib import Path


@dataclass
class Writer:
    target_dir: str | Path

    def __post_init__(self):
        self.target_dir = Path(self.target_dir)
        self.target_dir.mkdir(parents=True, exist_ok=True)
