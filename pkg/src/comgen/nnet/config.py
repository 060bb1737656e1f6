"""Model and training hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass

VARIANTS = ("base", "ast", "api", "full")
CELLS = ("transformer", "gru")

# which encoder inputs each variant consumes
VARIANT_SOURCES = {
    "base": ("code",),
    "ast": ("code", "ast"),
    "api": ("code", "doc"),
    "full": ("code", "ast", "doc"),
}


@dataclass
class ModelConfig:
    """Desk-scale defaults; reference-scale values (6 layers, 8 heads,
    d_model 512, batch 32) can be set through any config file."""

    layers: int = 2
    heads: int = 4
    d_model: int = 128
    d_ff: int = 0  # 0 means 4 * d_model
    dropout: float = 0.1
    rel_pos_k: int = 16
    lr0: float = 0.1
    lr_floor: float = 1e-7
    max_epochs: int = 100
    batch_size: int = 32
    variant: str = "full"
    cell: str = "transformer"
    seed: int = 0
    patience: int = 2
    max_code_len: int = 256
    max_ast_len: int = 512
    max_doc_len: int = 256
    max_comment_len: int = 64

    def __post_init__(self):
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_model
        self.variant = self.variant.lower()
        self.cell = self.cell.lower()
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.cell not in CELLS:
            raise ValueError(f"unknown cell {self.cell!r}; expected one of {CELLS}")
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if not self.lr_floor < self.lr0:
            raise ValueError(f"lr_floor={self.lr_floor} must be below lr0={self.lr0}")

    @property
    def sources(self):
        return VARIANT_SOURCES[self.variant]

    def max_len(self, source):
        return {"code": self.max_code_len, "ast": self.max_ast_len,
                "doc": self.max_doc_len, "comment": self.max_comment_len}[source]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)
