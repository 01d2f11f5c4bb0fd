"""Fixed class vocabulary shared by the simulator, sampler, and benchmark.

Class id 0 is reserved for "no class".  Colors are the flat per-class
appearance used for imagined primitives and as the base color of simulated
geometry.
"""

import numpy as np

CLASS_NAMES = (
    "none", "wall", "floor", "door", "table", "chair", "sofa", "bed",
    "shelf", "lamp", "plant",
)

CLASS_ID = {name: i for i, name in enumerate(CLASS_NAMES)}

# Structural classes are never counted as objects in room-completion scoring.
STRUCTURAL_CLASSES = ("none", "wall", "floor", "door")

FURNITURE_CLASSES = tuple(c for c in CLASS_NAMES if c not in STRUCTURAL_CLASSES)

# Default object-navigation target classes; the world generator guarantees
# at least one instance of each.
DEFAULT_TARGETS = ("sofa", "bed", "plant", "lamp")

CLASS_COLORS = {
    "none": (0.0, 0.0, 0.0),
    "wall": (0.82, 0.80, 0.75),
    "floor": (0.55, 0.47, 0.38),
    "door": (0.48, 0.30, 0.18),
    "table": (0.62, 0.42, 0.24),
    "chair": (0.20, 0.35, 0.60),
    "sofa": (0.65, 0.18, 0.20),
    "bed": (0.30, 0.55, 0.35),
    "shelf": (0.45, 0.28, 0.50),
    "lamp": (0.92, 0.85, 0.35),
    "plant": (0.12, 0.50, 0.15),
}


def class_color(name: str) -> np.ndarray:
    return np.asarray(CLASS_COLORS[name], dtype=np.float64)
