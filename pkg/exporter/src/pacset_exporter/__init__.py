"""Convert trained ensembles into the pacset interchange JSON.

Supported sources: fitted scikit-learn RandomForestClassifier/Regressor
objects, and XGBoost gbtree models in their native JSON dump format.
The canonical split rule is "go left iff x[feature] <= threshold"; XGBoost's
strict less-than splits are normalized by stepping each threshold down one
float32 ulp, which is exact for float32 feature values.
"""

from dataclasses import dataclass, field


class ExportError(ValueError):
    """Model cannot be exported (unfitted, unsupported shape or booster)."""


@dataclass
class ExportReport:
    trees_exported: int = 0
    total_nodes: int = 0
    warnings: list[str] = field(default_factory=list)


from .sklearn_export import export_sklearn  # noqa: E402
from .xgboost_export import export_xgboost  # noqa: E402

__all__ = ["export_sklearn", "export_xgboost", "ExportReport", "ExportError"]
