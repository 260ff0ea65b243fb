from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

COMPOSITIONS = ("concat", "sum")


@dataclass
class ModelConfig:
    embed_dim: int = 50
    lstm_hidden: int = 100
    lstm_layers: int = 2
    cnn_filter_widths: tuple[int, ...] = (3, 4, 5)
    cnn_filters_per_width: int = 32
    dropout_rate: float = 0.3
    max_sentence_len: int = 60
    context_cap: int = 512
    use_attention: bool = False
    use_context: bool = False
    # "concat": one bilinear form over [z; m; c]. "sum": block-diagonal W, i.e. separate
    # bilinear terms for z, m and c added before the sigmoid.
    composition: str = "concat"
    # Event mode: sentences are sequences of event tuples embedded by a feed-forward layer
    # over slot word vectors of size event_word_dim; embed_dim is then the event size.
    use_events: bool = False
    event_word_dim: int = 50
    pretrained_events: bool = False

    def __post_init__(self):
        self.cnn_filter_widths = tuple(int(w) for w in self.cnn_filter_widths)
        dims = [self.embed_dim, self.lstm_hidden, self.lstm_layers, self.cnn_filters_per_width,
                self.max_sentence_len, self.context_cap, self.event_word_dim]
        if min(dims) < 1 or not self.cnn_filter_widths or min(self.cnn_filter_widths) < 1:
            raise ValueError("all model dimensions must be at least 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.composition not in COMPOSITIONS:
            raise ValueError(f"composition must be one of {COMPOSITIONS}")

    @property
    def sentence_dim(self) -> int:
        return 2 * self.lstm_hidden

    @property
    def context_dim(self) -> int:
        return len(self.cnn_filter_widths) * self.cnn_filters_per_width

    @property
    def bilinear_blocks(self) -> list[tuple[str, int]]:
        blocks = [("z", self.sentence_dim)]
        if self.use_attention:
            blocks.append(("m", self.sentence_dim))
        if self.use_context:
            blocks.append(("c", self.context_dim))
        return blocks

    @property
    def bilinear_dim(self) -> int:
        return sum(size for _, size in self.bilinear_blocks)

    @property
    def variant(self) -> str:
        name = "BILSTM"
        if self.use_events:
            name = "FFNN-" + name
        if self.use_attention:
            name += "-MT"
        if self.use_context:
            name += "-CTX"
        if self.use_events and self.pretrained_events:
            name += "-PRETRAIN"
        return name

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cnn_filter_widths"] = list(self.cnn_filter_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    validation_fraction: float = 0.05
    # absolute validation pair-accuracy gain below which an epoch counts as no improvement
    stop_threshold: float = 1e-5
    # consecutive non-improving epochs tolerated before stopping (1 stops at the first)
    patience: int = 1
    min_epochs: int = 1
    max_epochs: int = 50
    pairs_per_salad: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")
        if self.patience < 1 or self.max_epochs < 1 or self.pairs_per_salad < 2:
            raise ValueError("patience, max_epochs and pairs_per_salad must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
