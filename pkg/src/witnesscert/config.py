"""JSON configuration for witnesses, states and sources.

Matrices are nested lists of rows; an entry is a real number or a
``[re, im]`` pair.  Angles are in degrees.

Witness config::

    {"name": "...", "constant": 0.375,
     "settings": ["ZZZ", ...]            # Pauli strings, or lists of {"label", "matrix"}
     "terms": [{"weight": -0.125, "setting": 0, "bitmask": "011"}, ...],
     "readout": {"u": 0.95, "v": 0.99},  # Pauli settings only; or
     "povm": [[[{"value": 1.0, "element": M}, ...] per subsystem] per setting],
     "setting_distribution": [...]}      # optional, default recommended

``{"preset": "ghz"}`` loads the bundled GHZ witness; other keys override it.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from . import qsim
from .errors import DataIntegrityError, DomainError, InvalidModelError
from .sources import (
    DriftParams,
    DriftSource,
    FractionParams,
    FractionSource,
    IidSource,
    SceEprParams,
    StateSource,
    drift_preset,
    load_pauli_state,
    named_state,
)
from .witness import (
    LocalObservable,
    MeasurementSetting,
    ObservableTerm,
    PovmModel,
    SettingDistribution,
    WitnessDecomposition,
    WitnessGame,
    pauli_readout_model,
)

WITNESS_PRESETS = {"ghz": "ghz_witness.json"}


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataIntegrityError(f"{path}: invalid JSON ({exc})") from exc


def _bundled(name: str) -> dict:
    return json.loads(resources.files("witnesscert").joinpath(f"data/{name}").read_text(encoding="utf-8"))


def matrix_from_json(data) -> np.ndarray:
    try:
        rows = [[complex(e[0], e[1]) if isinstance(e, (list, tuple)) else complex(e) for e in row] for row in data]
        m = np.array(rows, dtype=complex)
    except (TypeError, ValueError, IndexError) as exc:
        raise InvalidModelError(f"cannot read matrix: {exc}") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidModelError("matrix must be square")
    return m


def matrix_to_json(m: np.ndarray):
    m = np.asarray(m)
    if np.all(m.imag == 0):
        return m.real.tolist()
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def witness_preset(name: str) -> dict:
    try:
        return _bundled(WITNESS_PRESETS[name.lower()])
    except KeyError as exc:
        raise DomainError(f"unknown witness preset {name!r}; known: {sorted(WITNESS_PRESETS)}") from exc


def _setting_from_json(item, x: int) -> MeasurementSetting:
    if isinstance(item, str):
        return MeasurementSetting.pauli(item)
    try:
        return MeasurementSetting(tuple(LocalObservable(o["label"], matrix_from_json(o["matrix"])) for o in item))
    except (KeyError, TypeError) as exc:
        raise InvalidModelError(f"setting {x}: expected a Pauli string or a list of {{label, matrix}}") from exc


def resolve_witness_dict(data: dict) -> dict:
    """Expand a ``preset`` reference into a full witness dict."""
    if "preset" in data:
        base = witness_preset(data["preset"])
        base.update({k: v for k, v in data.items() if k != "preset"})
        if "povm" in data:
            base.pop("readout", None)
        return base
    return dict(data)


def game_from_dict(data: dict) -> WitnessGame:
    d = resolve_witness_dict(data)
    try:
        settings = tuple(_setting_from_json(item, x) for x, item in enumerate(d["settings"]))
        terms = tuple(ObservableTerm(t["weight"], t["setting"], t["bitmask"]) for t in d["terms"])
        m = len(settings[0].observables) if settings else 0
        decomp = WitnessDecomposition(m, d["constant"], terms, settings)
    except (KeyError, TypeError, IndexError) as exc:
        raise InvalidModelError(f"witness config is missing or mistypes a field: {exc}") from exc
    if "povm" in d:
        try:
            povm = PovmModel(
                tuple(
                    tuple(tuple((e["value"], matrix_from_json(e["element"])) for e in sub) for sub in per_x)
                    for per_x in d["povm"]
                )
            )
        except (KeyError, TypeError) as exc:
            raise InvalidModelError(f"malformed povm block: {exc}") from exc
    else:
        ro = d.get("readout", {"u": 1.0, "v": 1.0})
        povm = pauli_readout_model(decomp, ro.get("u", 1.0), ro.get("v", 1.0))
    dist = d.get("setting_distribution")
    dist = SettingDistribution(tuple(dist)) if dist is not None else None
    return WitnessGame(decomp, povm, dist, name=d.get("name", ""))


def load_game(path_or_name: str) -> WitnessGame:
    """Witness from a JSON file path or a preset name."""
    if str(path_or_name).lower() in WITNESS_PRESETS:
        return game_from_dict({"preset": str(path_or_name)})
    return game_from_dict(load_json(path_or_name))


def state_from_spec(spec) -> qsim.DensityMatrix:
    """A state from a name, a Pauli-component dict, ``{"file": path}`` or ``{"matrix": M}``."""
    if isinstance(spec, str):
        return named_state(spec)
    if isinstance(spec, dict):
        if "components" in spec:
            return load_pauli_state(spec)
        if "file" in spec:
            return load_pauli_state(spec["file"])
        if "matrix" in spec:
            return qsim.DensityMatrix(matrix_from_json(spec["matrix"]))
        if "name" in spec:
            return named_state(spec["name"])
    raise InvalidModelError(f"cannot interpret state spec {spec!r}")


def _state_label(spec) -> str:
    return spec if isinstance(spec, str) else "custom"


def source_from_dict(data: dict) -> StateSource:
    kind = data.get("kind")
    if kind == "iid":
        spec = data.get("state", "table4")
        return IidSource(state_from_spec(spec), name=_state_label(spec))
    if kind == "drift":
        if data.get("preset", "table3") == "table3" and "epr1" not in data:
            return drift_preset(step=data.get("step", 0.98), theta0=data.get("theta0", 0.0))
        try:
            return DriftSource(
                SceEprParams(**data["epr1"]), SceEprParams(**data["epr2"]), DriftParams(**data.get("drift", {}))
            )
        except (KeyError, TypeError) as exc:
            raise InvalidModelError(f"drift source needs epr1, epr2 and drift blocks: {exc}") from exc
    if kind == "fraction":
        if "F" not in data:
            raise InvalidModelError("fraction source needs F")
        good = state_from_spec(data["good"]) if "good" in data else None
        bad = state_from_spec(data["bad"]) if "bad" in data else None
        return FractionSource(FractionParams(data["F"], good, bad, data.get("schedule_seed")))
    raise InvalidModelError(f"unknown source kind {kind!r}; expected iid, drift or fraction")


def dump_json(obj, path: Path | str) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
