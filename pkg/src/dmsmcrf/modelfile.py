"""Plain-text model files.

Header lines are TAB-separated ``name value...`` records, followed by one
``kind  a  b  weight`` line per feature in index order. Weights carry 17
significant digits so a save/load round trip is exact.
"""

from __future__ import annotations

import io
from typing import TextIO

import numpy as np

from .corpus import LabelSet, NounGroupPattern
from .duration import DurationModel, GammaLike, GaussianLike
from .features import DUR, FeatureConfig, FeatureIndex
from .inference import Model

MAGIC = "dmsmcrf-model"
VERSION = "1"


class ModelFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_model(m: Model, out: TextIO) -> None:
    ls = m.label_set
    cfg = m.config
    out.write(f"{MAGIC}\t{VERSION}\n")
    out.write("labels\t" + "\t".join(ls.labels) + "\n")
    out.write("durational\t" + "\t".join(sorted(ls.durational)) + "\n")
    out.write(f"default\t{ls.default_label}\n")
    out.write(f"L\t{m.L}\n")
    out.write("\t".join(["templates", *cfg.templates]) + "\n")
    p = cfg.pattern
    out.write(f"pattern\t{','.join(sorted(p.modifiers))}\t{','.join(sorted(p.heads))}\t{p.phrase_tag}\n")
    for lab in sorted(ls.durational):
        fam = cfg.duration.family(lab)
        if fam is None:
            out.write(f"duration\t{lab}\tnone\t-\t-\n")
        else:
            a, b = fam.params
            out.write(f"duration\t{lab}\t{fam.family}\t{_fmt(a)}\t{_fmt(b)}\n")
    out.write(f"features\t{m.index.K}\n")
    for kind, w in zip(m.index, m.theta):
        out.write(f"{kind[0]}\t{kind[1]}\t{kind[2]}\t{_fmt(w)}\n")


def dumps(m: Model) -> str:
    buf = io.StringIO()
    write_model(m, buf)
    return buf.getvalue()


def save_model(m: Model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_model(m, fh)


def read_model(reader: TextIO) -> Model:
    lines = iter(reader)

    def record(name: str) -> list[str]:
        try:
            line = next(lines).rstrip("\n")
        except StopIteration:
            raise ModelFormatError(f"truncated model file, expected {name!r}") from None
        cols = line.split("\t")
        if cols[0] != name:
            raise ModelFormatError(f"expected {name!r} record, got {cols[0]!r}")
        return cols[1:]

    if record(MAGIC) != [VERSION]:
        raise ModelFormatError("unsupported model version")
    labels = tuple(record("labels"))
    durational = frozenset(x for x in record("durational") if x)
    (default,) = record("default")
    label_set = LabelSet(labels, durational, default)
    L = int(record("L")[0])
    templates = tuple(x for x in record("templates") if x)
    mods, heads, phrase_tag = record("pattern")
    pattern = NounGroupPattern(frozenset(mods.split(",")), frozenset(heads.split(",")), phrase_tag)
    fams = {}
    for _ in sorted(durational):
        lab, family, a, b = record("duration")
        if family == "none":
            fams[lab] = None
        elif family == "gaussian":
            fams[lab] = GaussianLike(float(a), float(b))
        elif family == "gamma":
            fams[lab] = GammaLike(float(a), float(b))
        else:
            raise ModelFormatError(f"unknown duration family {family!r}")
    K = int(record("features")[0])
    index = FeatureIndex()
    theta = np.empty(K)
    for k in range(K):
        try:
            tag, a, b, w = next(lines).rstrip("\n").split("\t")
        except (StopIteration, ValueError):
            raise ModelFormatError(f"bad or missing feature line {k}") from None
        index.add((tag, a, int(b) if tag == DUR else b))
        theta[k] = float(w)
    index.freeze()
    config = FeatureConfig(label_set, DurationModel(fams), templates, pattern)
    return Model(config, L, index, theta)


def loads(text: str) -> Model:
    return read_model(io.StringIO(text))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return read_model(fh)
