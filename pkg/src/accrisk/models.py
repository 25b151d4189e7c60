"""The four predictors behind one train/predict contract.

``DAP`` combines an LSTM over the interval blocks, a learned region
embedding, and dense sigmoid branches over Desc2Vec and POI counts, then
classifies the concatenation with a dense head. ``DNN`` is the head alone
over the flattened 305 features; ``LogReg`` is a single softmax layer with
an optional L1/L2 penalty.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DivergenceError, EmptyFeatureSet, InvalidPenalty, UnknownRegion
from .featurize import FULL_LAYOUT, DatasetSplit, FeatureLayout, SampleSet
from .nnkit import checkpoint
from .nnkit.layers import LSTM, BatchNorm, Dense, Embedding, ReLU, Sigmoid, cross_entropy, softmax
from .nnkit.optim import Adam
from .nnkit.rng import RngStream


@dataclass
class DapConfig:
    region_count: int
    embedding_dim: int = 128
    lstm_layers: int = 2
    lstm_hidden: int = 128
    branch_dense: int = 128
    head_sizes: tuple = (512, 256, 64, 2)
    use_embedding: bool = True

    def __post_init__(self):
        self.head_sizes = tuple(int(h) for h in self.head_sizes)
        if len(self.head_sizes) != 4 or self.head_sizes[-1] != 2:
            raise ValueError("head must be four dense layers ending in 2 units")
        if self.use_embedding and self.region_count < 1:
            raise ValueError("embedding needs at least one region")


@dataclass
class TrainConfig:
    epochs: int = 60
    early_stopping_patience: int = 10
    lr: float = 0.01
    batch: int = 64
    seeds: tuple = (0, 1, 2)
    val_fraction: float = 0.1

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.early_stopping_patience >= self.epochs:
            raise ValueError("patience must be smaller than the epoch budget")


@dataclass(frozen=True)
class Prediction:
    prob_accident: float
    prob_non_accident: float

    @property
    def hard_label(self) -> int:
        return int(self.prob_accident > self.prob_non_accident)


# class 0 = non-accident, class 1 = accident


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def _head(n_in, sizes, rng):
    a, b, c, d = sizes
    return Sequential([Dense(n_in, a, rng), ReLU(),
                       Dense(a, b, rng), ReLU(), BatchNorm(b),
                       Dense(b, c, rng), ReLU(), BatchNorm(c),
                       Dense(c, d, rng)])


class Model:
    kind = "model"

    def __init__(self, layout: FeatureLayout):
        self.layout = layout
        self.modules: dict[str, object] = {}
        self.optimizer: Adam | None = None
        self.rng_state = None

    # parameter plumbing --------------------------------------------------
    def _layers(self):
        for mname, mod in self.modules.items():
            layers = mod.layers if isinstance(mod, Sequential) else [mod]
            for k, layer in enumerate(layers):
                yield (f"{mname}.{k}" if isinstance(mod, Sequential) else mname), layer

    def parameters(self) -> dict:
        return {f"{n}.{p}": arr for n, layer in self._layers() for p, arr in layer.params.items()}

    def grads(self) -> dict:
        return {f"{n}.{p}": layer.grads[p] for n, layer in self._layers() for p in layer.params}

    def buffers(self) -> dict:
        return {f"{n}.{b}": arr for n, layer in self._layers() if isinstance(layer, BatchNorm)
                for b, arr in layer.buffers.items()}

    def zero_grad(self):
        for _, layer in self._layers():
            layer.zero_grad()

    def _batchnorms(self):
        return [layer for _, layer in self._layers() if isinstance(layer, BatchNorm)]

    def param_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    # interface -------------------------------------------------------------
    def forward(self, X, regions, train=False):
        raise NotImplementedError

    def backward(self, dlogits):
        raise NotImplementedError

    def penalty(self):
        return 0.0, {}

    def loss_and_grads(self, X, regions, labels, check=False, need_grads=True):
        """Mean cross-entropy (plus penalty) of a training-mode pass and its gradients.

        ``check`` leaves batch-norm running statistics untouched so repeated
        evaluations are identical.
        """
        bns = self._batchnorms()
        for bn in bns:
            bn.track_running = not check
        try:
            logits = self.forward(X, regions, train=True)
        finally:
            for bn in bns:
                bn.track_running = True
        probs = softmax(logits)
        loss, dlogits = cross_entropy(probs, labels)
        pen, pen_grads = self.penalty()
        loss += pen
        if not need_grads:
            return loss, None
        self.zero_grad()
        self.backward(dlogits)
        grads = self.grads()
        for k, g in pen_grads.items():
            grads[k] += g
        return loss, grads

    def predict_proba(self, X, regions=None, batch: int = 4096) -> np.ndarray:
        """Eval-mode class probabilities, columns (non-accident, accident)."""
        X = np.asarray(X, dtype=float)
        regions = np.zeros(len(X), dtype=np.int64) if regions is None else np.asarray(regions)
        out = []
        for s in range(0, len(X), batch):
            out.append(softmax(self.forward(X[s:s + batch], regions[s:s + batch], train=False)))
        return np.concatenate(out) if out else np.zeros((0, 2))

    def architecture(self) -> dict:
        return {"kind": self.kind, "layout": self.layout.to_dict()}

    def snapshot(self):
        return ({k: v.copy() for k, v in self.parameters().items()},
                {k: v.copy() for k, v in self.buffers().items()})

    def restore(self, snap):
        params, bufs = snap
        for k, v in self.parameters().items():
            v[...] = params[k]
        for k, v in self.buffers().items():
            v[...] = bufs[k]


class DAP(Model):
    def __init__(self, config: DapConfig, layout: FeatureLayout = FULL_LAYOUT, seed: int = 0):
        super().__init__(layout)
        self.config = config
        self.seed = seed
        rng = RngStream(seed)
        c = config
        width = 0
        if layout.step > 0:
            self.modules["lstm"] = LSTM(layout.step, c.lstm_hidden, c.lstm_layers, rng)
            width += c.lstm_hidden
        if c.use_embedding:
            self.modules["embed"] = Embedding(c.region_count, c.embedding_dim, rng)
            self.modules["embed_fc"] = Sequential([Dense(c.embedding_dim, c.branch_dense, rng),
                                                   Sigmoid()])
            width += c.branch_dense
        if layout.desc > 0:
            self.modules["desc_fc"] = Sequential([Dense(layout.desc, c.branch_dense, rng),
                                                  Sigmoid()])
            width += c.branch_dense
        if layout.poi > 0:
            self.modules["poi_fc"] = Sequential([Dense(layout.poi, c.branch_dense, rng), Sigmoid()])
            width += c.branch_dense
        if width == 0:
            raise EmptyFeatureSet("DAP has no input branch left")
        self.head_in = width
        self.modules["head"] = _head(width, c.head_sizes, rng)

    @property
    def kind(self):
        return "dap" if self.config.use_embedding else "dap-noembed"

    def forward(self, X, regions, train=False):
        poi, desc, dyn = self.layout.split(X)
        parts = []
        self._widths = []
        m = self.modules
        if "lstm" in m:
            parts.append(m["lstm"].forward(dyn, train))
        if "embed" in m:
            regions = np.asarray(regions, dtype=np.int64)
            if regions.size and (regions.max() >= self.config.region_count or regions.min() < 0):
                raise UnknownRegion(f"region index outside [0, {self.config.region_count})")
            parts.append(m["embed_fc"].forward(m["embed"].forward(regions, train), train))
        if "desc_fc" in m:
            parts.append(m["desc_fc"].forward(desc, train))
        if "poi_fc" in m:
            parts.append(m["poi_fc"].forward(poi, train))
        self._widths = [p.shape[1] for p in parts]
        return m["head"].forward(np.concatenate(parts, axis=1), train)

    def backward(self, dlogits):
        m = self.modules
        dcat = m["head"].backward(dlogits)
        pieces = np.split(dcat, np.cumsum(self._widths)[:-1], axis=1)
        names = [k for k in ("lstm", "embed", "desc_fc", "poi_fc") if k in m]
        for name, d in zip(names, pieces):
            if name == "embed":
                m["embed"].backward(m["embed_fc"].backward(d))
            else:
                m[name].backward(d)

    def architecture(self) -> dict:
        a = super().architecture()
        a["config"] = {**asdict(self.config), "head_sizes": list(self.config.head_sizes)}
        a["seed"] = self.seed
        return a


class DNN(Model):
    kind = "dnn"

    def __init__(self, layout: FeatureLayout = FULL_LAYOUT, hidden=(512, 256, 64), seed: int = 0):
        super().__init__(layout)
        if layout.width == 0:
            raise EmptyFeatureSet("DNN has no input features")
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = seed
        self.modules["head"] = _head(layout.width, self.hidden + (2,), RngStream(seed))

    def forward(self, X, regions=None, train=False):
        return self.modules["head"].forward(np.asarray(X, dtype=float), train)

    def backward(self, dlogits):
        self.modules["head"].backward(dlogits)

    def architecture(self) -> dict:
        return {**super().architecture(), "hidden": list(self.hidden), "seed": self.seed}


class LogReg(Model):
    kind = "logreg"

    def __init__(self, layout: FeatureLayout = FULL_LAYOUT, penalty: str | None = None,
                 lam: float = 0.0, seed: int = 0):
        super().__init__(layout)
        if lam < 0:
            raise InvalidPenalty(f"penalty weight must be non-negative, got {lam}")
        if penalty not in (None, "none", "l1", "l2"):
            raise InvalidPenalty(f"unknown penalty {penalty!r}")
        if layout.width == 0:
            raise EmptyFeatureSet("logistic regression has no input features")
        self.penalty_kind = None if penalty in (None, "none") else penalty
        self.lam = float(lam)
        self.seed = seed
        self.modules["linear"] = Dense(layout.width, 2, RngStream(seed))

    def forward(self, X, regions=None, train=False):
        return self.modules["linear"].forward(np.asarray(X, dtype=float), train)

    def backward(self, dlogits):
        self.modules["linear"].backward(dlogits)

    def penalty(self):
        if not self.penalty_kind or self.lam == 0:
            return 0.0, {}
        W = self.modules["linear"].params["W"]
        if self.penalty_kind == "l1":
            return self.lam * float(np.abs(W).sum()), {"linear.W": self.lam * np.sign(W)}
        return self.lam * float((W * W).sum()), {"linear.W": 2 * self.lam * W}

    def architecture(self) -> dict:
        return {**super().architecture(), "penalty": self.penalty_kind, "lam": self.lam,
                "seed": self.seed}


def build_dap(c: DapConfig, layout: FeatureLayout = FULL_LAYOUT, seed: int = 0) -> DAP:
    return DAP(c, layout, seed)


def build_dnn(layout: FeatureLayout = FULL_LAYOUT, hidden=(512, 256, 64), seed: int = 0) -> DNN:
    return DNN(layout, hidden, seed)


def build_logreg(layout: FeatureLayout = FULL_LAYOUT, penalty=None, lam=0.0, seed=0) -> LogReg:
    return LogReg(layout, penalty, lam, seed)


def build_model(kind: str, layout: FeatureLayout = FULL_LAYOUT, region_count: int = 1,
                seed: int = 0, **options) -> Model:
    """Factory keyed by ``dap``, ``dap-noembed``, ``dnn`` or ``logreg``."""
    if kind in ("dap", "dap-noembed"):
        cfg = DapConfig(region_count=region_count, use_embedding=(kind == "dap"), **options)
        return DAP(cfg, layout, seed)
    if kind == "dnn":
        return DNN(layout, seed=seed, **options)
    if kind == "logreg":
        return LogReg(layout, seed=seed, **options)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# training


def _batches(order, size):
    chunks = [order[s:s + size] for s in range(0, len(order), size)]
    # a trailing single row would break batch normalisation
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def mean_loss(model: Model, data: SampleSet, batch: int = 4096) -> float:
    if len(data) == 0:
        return float("nan")
    probs = model.predict_proba(data.X, data.region, batch)
    return cross_entropy(probs, data.label)[0]


def train(m: Model, split: DatasetSplit, tc: TrainConfig, seed: int | None = None):
    """Mini-batch Adam with early stopping on validation loss.

    Returns the model restored to its best-validation snapshot and the
    per-epoch history ``[{"epoch", "train_loss", "val_loss"}]``. Training
    stops once ``early_stopping_patience`` consecutive epochs pass without a
    strictly lower validation loss, or when the epoch budget runs out.
    """
    data = split.train
    if len(data) == 0:
        raise ValueError("empty training split")
    seed = tc.seeds[0] if seed is None else seed
    rng = RngStream(seed).spawn(2)[1]
    opt = Adam(m.parameters(), lr=tc.lr)
    m.optimizer = opt
    monitor = split.validation if len(split.validation) else data
    history = []
    best, best_loss, stale = None, math.inf, 0
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(data))
        total, count = 0.0, 0
        for idx in _batches(order, tc.batch):
            loss, grads = m.loss_and_grads(data.X[idx], data.region[idx], data.label[idx])
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            opt.step(grads)
            total += loss * len(idx)
            count += len(idx)
        val = mean_loss(m, monitor)
        if not math.isfinite(val):
            raise DivergenceError(epoch, val)
        history.append({"epoch": epoch, "train_loss": total / count, "val_loss": val})
        if val < best_loss:
            best_loss, best, stale = val, m.snapshot(), 0
        else:
            stale += 1
            if stale > tc.early_stopping_patience:
                break
    m.restore(best)
    m.rng_state = rng.state
    return m, history


def predict(m: Model, entries: SampleSet, batch: int = 4096) -> list[Prediction]:
    probs = m.predict_proba(entries.X, entries.region, batch)
    return [Prediction(float(p[1]), float(p[0])) for p in probs]


def predict_labels(m: Model, entries: SampleSet, batch: int = 4096) -> np.ndarray:
    probs = m.predict_proba(entries.X, entries.region, batch)
    return (probs[:, 1] > probs[:, 0]).astype(np.int64)


def write_history(history: Sequence[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for h in history:
            w.writerow([h["epoch"], repr(float(h["train_loss"])), repr(float(h["val_loss"]))])


# ---------------------------------------------------------------------------
# checkpoints


def save_model(path, m: Model, extra: dict | None = None, meta: dict | None = None) -> None:
    """Write parameters, batch-norm buffers, Adam moments and ``extra`` arrays."""
    blocks = {f"param/{k}": v for k, v in m.parameters().items()}
    blocks.update({f"buffer/{k}": v for k, v in m.buffers().items()})
    if m.optimizer is not None:
        blocks.update({f"adam_m/{k}": v for k, v in m.optimizer.m.items()})
        blocks.update({f"adam_v/{k}": v for k, v in m.optimizer.v.items()})
    for k, v in (extra or {}).items():
        blocks[f"extra/{k}"] = v
    meta = dict(meta or {})
    if m.optimizer is not None:
        meta["adam_t"] = m.optimizer.t
        meta["adam_lr"] = m.optimizer.lr
    checkpoint.save(path, blocks, {"tag": m.kind, **m.architecture()}, meta, m.rng_state)


def model_from_architecture(arch: dict) -> Model:
    layout = FeatureLayout(**arch["layout"])
    kind = arch["kind"]
    if kind in ("dap", "dap-noembed"):
        return DAP(DapConfig(**arch["config"]), layout, arch.get("seed", 0))
    if kind == "dnn":
        return DNN(layout, arch["hidden"], arch.get("seed", 0))
    if kind == "logreg":
        return LogReg(layout, arch["penalty"], arch["lam"], arch.get("seed", 0))
    raise ValueError(f"unknown architecture {kind!r}")


def load_model(path):
    """(model, extra arrays, meta) from a checkpoint written by :func:`save_model`."""
    blocks, arch, meta, rng = checkpoint.load(path)
    m = model_from_architecture(arch)
    for k, v in m.parameters().items():
        v[...] = blocks[f"param/{k}"]
    for k, v in m.buffers().items():
        v[...] = blocks[f"buffer/{k}"]
    if any(b.startswith("adam_m/") for b in blocks):
        opt = Adam(m.parameters(), lr=meta.get("adam_lr", 0.01))
        for k in opt.m:
            opt.m[k][...] = blocks[f"adam_m/{k}"]
            opt.v[k][...] = blocks[f"adam_v/{k}"]
        opt.t = meta.get("adam_t", 0)
        m.optimizer = opt
    m.rng_state = rng
    extra = {k[len("extra/"):]: v for k, v in blocks.items() if k.startswith("extra/")}
    return m, extra, meta
