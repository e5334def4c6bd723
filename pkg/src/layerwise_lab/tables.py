"""Published configuration rows (model, LR, DR, hierarchy) with their reported accuracies.

Used to generate golden run configs and as the hierarchy catalogue for the
acceleration check.  Accuracies are percentages as reported, at full scale.
"""

from __future__ import annotations

from typing import NamedTuple


class TableRow(NamedTuple):
    table: str
    dataset: str
    model: str
    lr: float
    dr: float
    hierarchy: str
    block_kind: str
    layerwise: float
    global_: float


ROWS = (
    TableRow("I", "cifar10", "VGG8", 5e-4, 0.2, "[1,1,1,1,1]", "plain", 89.72, 90.59),
    TableRow("I", "cifar10", "VGG11", 5e-4, 0.2, "[1,1,2,2,2]", "plain", 90.6, 91.6),
    TableRow("I", "cifar10", "VGG16", 3e-4, 0.25, "[2,2,3,3,3]", "plain", 89.2, 92.03),
    TableRow("I", "cifar10", "VGG16_e1", 3e-4, 0.25, "[3,3,4,4,4]", "plain", 87.69, 92.5),
    TableRow("I", "cifar10", "VGG16_e2", 3e-4, 0.25, "[4,4,5,5,5]", "plain", 86.2, 91.72),
    TableRow("I", "cifar10", "VGG16_e3", 3e-4, 0.25, "[5,5,6,6,6]", "plain", 84.3, 90.67),
    TableRow("I", "cifar10", "VGG19", 3e-4, 0.25, "[2,2,4,4,4]", "plain", 89.14, 92.21),
    TableRow("I", "cifar10", "VGG19_e1", 3e-4, 0.25, "[3,3,5,5,5]", "plain", 87.77, 91.93),
    TableRow("I", "cifar10", "VGG19_e2", 3e-4, 0.25, "[4,4,6,6,6]", "plain", 86.0, 91.65),
    TableRow("I", "cifar10", "VGG19_e3", 3e-4, 0.25, "[5,5,7,7,7]", "plain", 83.7, 89.83),
    TableRow("I", "cifar10", "VGG8b", 5e-4, 0.2, "[2,2,1,1]", "plain", 94.59, 94.15),
    TableRow("I", "cifar10", "VGG8b_e1", 5e-4, 0.2, "[3,3,2,2]", "plain", 95.05, 95.0),
    TableRow("I", "cifar10", "VGG8b_e2", 5e-4, 0.2, "[4,4,3,3]", "plain", 94.7, 95.2),
    TableRow("I", "cifar10", "VGG8b_e3", 5e-4, 0.2, "[5,5,4,4]", "plain", 94.52, 95.1),
    TableRow("II", "cifar100", "VGG8", 5e-4, 0.2, "[1,1,1,1,1]", "plain", 65.38, 65.82),
    TableRow("II", "cifar100", "VGG11", 5e-4, 0.2, "[1,1,2,2,2]", "plain", 67.88, 65.84),
    TableRow("II", "cifar100", "VGG16", 3e-4, 0.1, "[2,2,3,3,3]", "plain", 66.15, 68.25),
    TableRow("II", "cifar100", "VGG16_e1", 3e-4, 0.1, "[3,3,4,4,4]", "plain", 64.43, 70.13),
    TableRow("II", "cifar100", "VGG16_e2", 3e-4, 0.1, "[4,4,5,5,5]", "plain", 61.35, 69.52),
    TableRow("II", "cifar100", "VGG16_e3", 3e-4, 0.1, "[5,5,6,6,6]", "plain", 57.98, 67.93),
    TableRow("II", "cifar100", "VGG19", 3e-4, 0.15, "[2,2,4,4,4]", "plain", 65.76, 69.4),
    TableRow("II", "cifar100", "VGG19_e1", 3e-4, 0.15, "[3,3,5,5,5]", "plain", 63.88, 70.55),
    TableRow("II", "cifar100", "VGG19_e2", 3e-4, 0.15, "[4,4,6,6,6]", "plain", 60.58, 68.95),
    TableRow("II", "cifar100", "VGG19_e3", 3e-4, 0.15, "[5,5,7,7,7]", "plain", 57.22, 65.68),
    TableRow("II", "cifar100", "VGG8b", 5e-4, 0.05, "[2,2,1,1]", "plain", 73.93, 73.47),
    TableRow("II", "cifar100", "VGG8b_e1", 5e-4, 0.05, "[3,3,2,2]", "plain", 74.5, 74.05),
    TableRow("II", "cifar100", "VGG8b_e2", 5e-4, 0.05, "[4,4,3,3]", "plain", 74.2, 71.79),
    TableRow("II", "cifar100", "VGG8b_e3", 5e-4, 0.05, "[5,5,4,4]", "plain", 73.02, 69.0),
    TableRow("III", "cifar10", "ResNet18", 3e-4, 0.3, "[2,2,2,2]", "residual", 86.94, 92.45),
    TableRow("III", "cifar10", "ResNet18_e1", 3e-4, 0.3, "[3,3,3,3]", "residual", 83.64, 91.62),
    TableRow("III", "cifar10", "ResNet18_e2", 3e-4, 0.3, "[4,4,4,4]", "residual", 79.84, 89.98),
    TableRow("III", "cifar10", "ResNet50", 3e-4, 0.3, "[3,4,6,3]", "residual", 85.6, 89.65),
    TableRow("III", "cifar10", "ResNet50_e1", 3e-4, 0.3, "[4,5,6,3]", "residual", 83.64, 88.52),
    TableRow("III", "cifar10", "ResNet50_e2", 3e-4, 0.3, "[5,6,6,3]", "residual", 81.23, 87.83),
    TableRow("IV", "cifar100", "ResNet18", 3e-4, 0.1, "[2,2,2,2]", "residual", 62.32, 72.45),
    TableRow("IV", "cifar100", "ResN18_e1", 3e-4, 0.1, "[3,3,3,3]", "residual", 62.85, 71.38),
    TableRow("IV", "cifar100", "ResNet18_e2", 3e-4, 0.1, "[4,4,4,4]", "residual", 59.98, 69.74),
    TableRow("IV", "cifar100", "ResNet50", 3e-4, 0.1, "[3,4,6,3]", "residual", 67.01, 72.34),
    TableRow("IV", "cifar100", "ResNet50_e1", 3e-4, 0.1, "[4,5,6,3]", "residual", 66.06, 70.73),
    TableRow("IV", "cifar100", "ResNet50_e2", 3e-4, 0.1, "[5,6,6,3]", "residual", 65.42, 70.97),
    TableRow("V", "cifar10", "ResNet18", 3e-4, 0.3, "[2,2,2,2]", "residual", 86.94, 92.45),
    TableRow("V", "cifar10", "ResN18_r1", 3e-4, 0.3, "[1,1,1,1]", "residual", 89.26, 92.75),
    TableRow("V", "cifar10", "ResNet18_r2", 3e-4, 0.3, "[2,2,1,1]", "residual", 86.27, 92.39),
    TableRow("V", "cifar10", "ResNet18_r3", 3e-4, 0.3, "[2,1,1,1]", "residual", 87.61, 92.48),
    TableRow("V", "cifar10", "ResNet18_r4", 3e-4, 0.3, "[1,1,2,2]", "residual", 89.77, 93.01),
    TableRow("V", "cifar10", "ResNet50", 3e-4, 0.3, "[3,4,6,3]", "residual", 85.6, 89.65),
    TableRow("V", "cifar10", "ResNet50_r1", 3e-4, 0.3, "[2,3,6,3]", "residual", 87.62, 90.73),
    TableRow("V", "cifar10", "ResNet50_r2", 3e-4, 0.3, "[1,2,6,3]", "residual", 89.68, 91.69),
    TableRow("V", "cifar10", "ResNet50_r3", 3e-4, 0.3, "[2,3,7,4]", "residual", 87.93, 90.52),
    TableRow("V", "cifar10", "ResNet50_r4", 3e-4, 0.3, "[1,2,8,5]", "residual", 89.81, 90.49),
    TableRow("VI", "cifar100", "ResNet18", 3e-4, 0.1, "[2,2,2,2]", "residual", 66.05, 73.13),
    TableRow("VI", "cifar100", "ResN18_r1", 3e-4, 0.1, "[1,1,1,1]", "residual", 66.37, 73.6),
    TableRow("VI", "cifar100", "ResNet18_r2", 3e-4, 0.1, "[2,2,1,1]", "residual", 64.54, 74.08),
    TableRow("VI", "cifar100", "ResNet18_r3", 3e-4, 0.1, "[2,1,1,1]", "residual", 64.84, 73.55),
    TableRow("VI", "cifar100", "ResNet18_r4", 3e-4, 0.1, "[1,1,2,2]", "residual", 68.32, 73.76),
    TableRow("VI", "cifar100", "ResNet18_r5", 3e-4, 0.1, "[1,1,2,4]", "residual", 69.12, 72.8),
    TableRow("VI", "cifar100", "ResNet50", 3e-4, 0.1, "[3,4,6,3]", "residual", 67.01, 72.34),
    TableRow("VI", "cifar100", "ResNet50_r1", 3e-4, 0.1, "[2,3,6,3]", "residual", 68.64, 73.94),
    TableRow("VI", "cifar100", "ResNet50_r2", 3e-4, 0.1, "[1,2,6,3]", "residual", 69.53, 73.86),
    TableRow("VI", "cifar100", "ResNet50_r3", 3e-4, 0.1, "[2,3,7,4]", "residual", 68.06, 72.82),
    TableRow("VI", "cifar100", "ResNet50_r4", 3e-4, 0.1, "[1,2,8,5]", "residual", 68.98, 72.77),
)


def distinct_hierarchies() -> list[str]:
    """Every hierarchy appearing in the tables, in first-appearance order."""
    seen: dict[str, None] = {}
    for r in ROWS:
        seen.setdefault(r.hierarchy, None)
    return list(seen)


def rows_for(table: str) -> list[TableRow]:
    return [r for r in ROWS if r.table == table]
