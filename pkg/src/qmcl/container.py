"""On-disk model container.

A model is a directory holding ``manifest.txt`` and one raw blob per array.
The manifest is plain ``key = value`` text. Array entries read
``array.<name> = <file> <d0>,<d1>,...``; blobs are little-endian float64 in
row-major order, so any language can read them without a parser library.
"""

from __future__ import annotations

import hashlib
import os
from datetime import datetime, timezone

import numpy as np

from .basis import EigenBasis
from .closure import ClosureModel, TrainingConfig
from .dynamics import get_system
from .errors import ContainerError
from .operators import EffectMapModel, SpectralDecomposition

__all__ = ["FORMAT_VERSION", "dataset_fingerprint", "load_model", "read_manifest", "save_model"]

FORMAT_VERSION = 1
MANIFEST = "manifest.txt"

_CONFIG_FIELDS = ("L", "feature_bandwidth", "r", "k_nn", "basis_bandwidth",
                  "delays", "solver", "seed", "tune_max_points")


def dataset_fingerprint(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return "sha256:" + h.hexdigest()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_array(path, name, a, lines):
    a = np.ascontiguousarray(a, dtype="<f8")
    fname = f"{name}.bin"
    with open(os.path.join(path, fname), "wb") as fh:
        fh.write(a.tobytes(order="C"))
    lines.append(f"array.{name} = {fname} {','.join(str(d) for d in a.shape)}")


def save_model(model: ClosureModel, path, fingerprint="", timestamp=None):
    """Write ``model`` under directory ``path`` (created if needed)."""
    os.makedirs(path, exist_ok=True)
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    lines = [
        "format = qmcl-model",
        f"format_version = {FORMAT_VERSION}",
        f"created = {timestamp}",
        "dtype = float64",
        "byte_order = little",
        "order = row-major",
        f"system = {model.system.name}",
    ]
    lines += [f"system.{k} = {_fmt(v)}" for k, v in model.system.params().items()]
    lines += [
        f"dt = {_fmt(model.dt)}",
        f"r = {model.r}",
        f"basis_bandwidth = {_fmt(model.basis_bandwidth)}",
        f"feature_bandwidth = {_fmt(model.effect_map.bandwidth)}",
        f"k_nn = {model.k_nn}",
        f"n_flux = {model.flux_dim}",
        f"dataset_fingerprint = {fingerprint}",
    ]
    if model.config is not None:
        for k in _CONFIG_FIELDS:
            v = getattr(model.config, k)
            lines.append(f"config.{k} = {'' if v is None else _fmt(v)}")

    _write_array(path, "phi", model.basis.phi, lines)
    _write_array(path, "eigenvalues", model.basis.eigenvalues, lines)
    _write_array(path, "koopman", model.koopman, lines)
    _write_array(path, "train_x", model.effect_map.train_x, lines)
    _write_array(path, "train_z", model.train_z, lines)
    for i, (Z, dec) in enumerate(zip(model.flux_observables, model.flux_spectra)):
        _write_array(path, f"flux_matrix_{i}", Z, lines)
        _write_array(path, f"flux_eigenvalues_{i}", dec.eigenvalues, lines)
        _write_array(path, f"flux_eigenvectors_{i}", dec.eigenvectors, lines)

    with open(os.path.join(path, MANIFEST), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path):
    fname = os.path.join(path, MANIFEST)
    if not os.path.exists(fname):
        raise ContainerError(f"no {MANIFEST} in {path}")
    entries = {}
    with open(fname) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ContainerError(f"{fname}:{n}: expected 'key = value'")
            entries[key.strip()] = value.strip()
    if entries.get("format") != "qmcl-model" or "format_version" not in entries:
        raise ContainerError(f"{fname} is not a model manifest")
    if int(entries["format_version"]) != FORMAT_VERSION:
        raise ContainerError(f"unsupported format_version {entries['format_version']}")
    return entries


def _read_array(path, entries, name):
    try:
        fname, shape = entries[f"array.{name}"].split()
    except KeyError:
        raise ContainerError(f"manifest lists no array {name!r}") from None
    shape = tuple(int(d) for d in shape.split(",")) if shape else ()
    full = os.path.join(path, fname)
    expected = 8 * int(np.prod(shape))
    size = os.path.getsize(full) if os.path.exists(full) else -1
    if size != expected:
        raise ContainerError(
            f"{fname}: expected {expected} bytes for shape {shape}, found {size}")
    return np.fromfile(full, dtype="<f8").reshape(shape).astype(float)


def _num(s):
    try:
        return int(s)
    except ValueError:
        return float(s)


def load_model(path) -> ClosureModel:
    e = read_manifest(path)
    params = {k[len("system."):]: _num(v) for k, v in e.items() if k.startswith("system.")}
    system = get_system(e["system"], **params)

    phi = _read_array(path, e, "phi")
    basis = EigenBasis(phi=phi, eigenvalues=_read_array(path, e, "eigenvalues"))
    n_flux = int(e["n_flux"])
    Zs = tuple(_read_array(path, e, f"flux_matrix_{i}") for i in range(n_flux))
    spectra = tuple(
        SpectralDecomposition(_read_array(path, e, f"flux_eigenvalues_{i}"),
                              _read_array(path, e, f"flux_eigenvectors_{i}"))
        for i in range(n_flux))
    effect = EffectMapModel(phi=phi, train_x=_read_array(path, e, "train_x"),
                            bandwidth=float(e["feature_bandwidth"]))

    config = None
    if "config.L" in e:
        kw = {}
        for k in _CONFIG_FIELDS:
            v = e.get(f"config.{k}", "")
            if v == "":
                continue
            kw[k] = v if k == "solver" else _num(v)
        config = TrainingConfig(**kw)

    return ClosureModel(
        basis=basis, koopman=_read_array(path, e, "koopman"), flux_observables=Zs,
        flux_spectra=spectra, effect_map=effect, system=system, dt=float(e["dt"]),
        r=int(e["r"]), basis_bandwidth=float(e["basis_bandwidth"]), k_nn=int(e["k_nn"]),
        train_z=_read_array(path, e, "train_z"), config=config,
    )
