"""Access to the bundled map and scenario fixtures."""

from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled data file, e.g. ``roundabout.json``."""
    ref = resources.files("crossplan") / "data" / name
    return Path(str(ref))


def fixture_names() -> list[str]:
    return sorted(p.name for p in (resources.files("crossplan") / "data").iterdir()
                  if p.name.endswith(".json"))
