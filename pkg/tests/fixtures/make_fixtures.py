"""Regenerate the committed binary fixtures (run from the repository root)."""
from pathlib import Path

from drnnsep.model import Architecture, init_model, save_model

HERE = Path(__file__).parent

if __name__ == "__main__":
    m = init_model(Architecture((4, 5, 5, 6), 1), seed=7,
                   meta={"feature_kind": "spectra", "context_frames": 1})
    save_model(m, HERE / "model_v1_0.drnn")
