"""Versioned plain-text format for ``DgmmParams``.

Every line is ``key [shape] = values``, with numbers written by ``repr`` so
that finite doubles survive a round trip bit for bit::

    dgmm-params 1
    spec.p [] = 3
    spec.k [2] = 4 1
    spec.r [2] = 2 1
    layer1.eta [4 3] = ...
    layer1.lam [4 3 2] = ...
    layer1.psi [4 3] = ...
    layer1.pi [4] = ...
    ...
"""

import numpy as np

from .model import DgmmParams, DgmmSpec, LayerParams

MAGIC = "dgmm-params"
VERSION = 1
FIELDS = ("eta", "lam", "psi", "pi")


class ParamFormatError(ValueError):
    pass


def _line(key, arr, fmt):
    arr = np.asarray(arr)
    shape = " ".join(str(s) for s in arr.shape)
    return f"{key} [{shape}] = " + " ".join(fmt(v) for v in arr.ravel())


def dumps(params):
    return dumps_with_extra(params, {})


def dumps_with_extra(params, extra):
    """Like :func:`dumps`, appending ``extra`` arrays under their own keys."""
    spec = params.spec
    lines = [f"{MAGIC} {VERSION}", _line("spec.p", spec.p, str),
             _line("spec.k", spec.k, str), _line("spec.r", spec.r, str)]
    for l, layer in enumerate(params.layers, start=1):
        for name in FIELDS:
            lines.append(_line(f"layer{l}.{name}", getattr(layer, name), lambda v: repr(float(v))))
    for key, arr in extra.items():
        if key.startswith(("spec.", "layer")):
            raise ValueError(f"extra key {key!r} clashes with a model entry")
        lines.append(_line(key, arr, lambda v: repr(float(v))))
    return "\n".join(lines) + "\n"


def _parse(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParamFormatError("empty parameter file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise ParamFormatError(f"not a parameter file (expected header {MAGIC!r})")
    if head[1] != str(VERSION):
        raise ParamFormatError(f"unsupported format version {head[1]} (this library reads {VERSION})")
    entries = {}
    for no, ln in enumerate(lines[1:], start=2):
        try:
            key, rest = ln.split(" [", 1)
            shape_txt, values = rest.split("] =", 1)
            shape = tuple(int(s) for s in shape_txt.split())
            vals = [float(v) for v in values.split()]
        except ValueError:
            raise ParamFormatError(f"line {no}: cannot parse {ln[:60]!r}") from None
        size = int(np.prod(shape)) if shape else 1
        if len(vals) != size:
            raise ParamFormatError(f"line {no}: {key} declares shape {shape} but has {len(vals)} values")
        entries[key] = np.array(vals, dtype=np.float64).reshape(shape)
    return entries


def loads(text):
    return loads_with_extra(text)[0]


def loads_with_extra(text):
    """Parameters plus a dict of every entry that is not part of the model."""
    e = _parse(text)
    try:
        p = int(e["spec.p"])
        spec = DgmmSpec(p, tuple(int(v) for v in e["spec.k"]), tuple(int(v) for v in e["spec.r"]))
        layers = [LayerParams(*(e[f"layer{l}.{name}"] for name in FIELDS)) for l in range(1, spec.h + 1)]
    except KeyError as exc:
        raise ParamFormatError(f"missing entry {exc.args[0]}") from None
    except ValueError as exc:
        raise ParamFormatError(str(exc)) from None
    try:
        params = DgmmParams(spec, layers)
    except ValueError as exc:
        raise ParamFormatError(f"invalid parameters: {exc}") from None
    extra = {k: v for k, v in e.items() if not k.startswith(("spec.", "layer"))}
    return params, extra


def save_params(params, path):
    with open(path, "w") as fh:
        fh.write(dumps(params))


def load_params(path):
    return load_params_with_extra(path)[0]


def load_params_with_extra(path):
    with open(path) as fh:
        return loads_with_extra(fh.read())
