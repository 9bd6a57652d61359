"""
Write every named preset to configs/<name>.yaml.

Usage:
    python -m scripts.export_presets [target_dir]
"""
import logging
import sys
import os
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from efi.core.logging import configure_logging
from efi.schemas.experiment import dump_config
from efi.services.presets import get_preset, list_presets

logger = logging.getLogger("efi.scripts.export_presets")


def export(target: Path) -> int:
    target.mkdir(parents=True, exist_ok=True)
    for name in list_presets():
        path = target / f"{name}.yaml"
        path.write_text(dump_config(get_preset(name)), encoding="utf-8")
        logger.info("wrote %s", path)
    return len(list_presets())


if __name__ == "__main__":
    configure_logging()
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "configs"
    count = export(out)
    print(f"Exported {count} presets to {out}")
