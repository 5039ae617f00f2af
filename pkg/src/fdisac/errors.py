class InfeasibleError(RuntimeError):
    """A design constraint cannot be met.

    ``constraint`` names the violated constraint (``"C3"``, ``"C4"`` ...),
    ``shortfall_db`` how far the best attempt missed it.
    """

    def __init__(self, constraint: str, message: str, shortfall_db: float | None = None,
                 detail: dict | None = None):
        super().__init__(f"{constraint} infeasible: {message}")
        self.constraint = constraint
        self.shortfall_db = shortfall_db
        self.detail = detail or {}

    def to_dict(self) -> dict:
        return {
            "error": "infeasible",
            "constraint": self.constraint,
            "message": str(self),
            "shortfall_db": self.shortfall_db,
            "detail": self.detail,
        }


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` is the offending key path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
