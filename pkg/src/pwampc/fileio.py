"""Artifact serialization: model files, controller files, explicit tables,
scenarios, metrics.  All files are JSON with sorted keys so identical inputs
produce byte-identical outputs.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .mpc import ExplicitController, ExplicitRegion
from .plant import NonlinearFrictionPlant, PwaModel
from .polytope import Polyhedron
from .sim import Scenario
from .synthesis import TerminalDesign


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def sha16(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def save_model(model, path):
    return write_text(path, canonical_json(model.to_dict()))


def load_model(path):
    d = json.loads(Path(path).read_text())
    if d.get("type") == "nonlinear":
        return NonlinearFrictionPlant.from_dict(d)
    return PwaModel.from_dict(d)


def save_scenario(scenario: Scenario, path):
    return write_text(path, canonical_json(scenario.to_dict()))


def load_scenario(path):
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def design_to_dict(model: PwaModel, design: TerminalDesign, certificates=None):
    d = {
        "kind": design.kind,
        "model": model.to_dict(),
        "model_hash": sha16(model.to_dict()),
        "K1": design.K1.tolist(),
        "K2": design.K2.tolist(),
        "P1": design.P1.tolist(),
        "P2": design.P2.tolist(),
        "terminal_set": design.X_f.to_dict(),
        "gamma": design.gamma,
        "w_star": design.w_star,
        "Q": np.asarray(design.Q).tolist(),
        "R": design.R,
        "tolerances": {
            "riccati_residual": 1e-8,
            "lyapunov_residual": 1e-8,
            "qp_kkt": 1e-7,
            "inclusion_slack": 1e-9,
        },
    }
    if certificates is not None:
        d["certificates"] = certificates
    return d


def save_controller(model, design, path, certificates=None):
    return write_text(path, canonical_json(design_to_dict(model, design, certificates)))


def load_controller(path):
    d = json.loads(Path(path).read_text())
    model = PwaModel.from_dict(d["model"])
    design = TerminalDesign(
        K1=np.array(d["K1"]), K2=np.array(d["K2"]),
        P1=np.array(d["P1"]), P2=np.array(d["P2"]),
        X_f=Polyhedron.from_dict(d["terminal_set"]),
        gamma=float(d["gamma"]), w_star=float(d["w_star"]),
        kind=d.get("kind", "mpc-robust"),
        Q=np.array(d["Q"]), R=float(d["R"]),
        model_name=model.name,
    )
    return model, design


def table_to_dict(table: ExplicitController):
    return {
        "region_count": len(table.regions),
        "coverage": table.coverage,
        "online_fallback": table.fallback,
        "regions": [
            {
                "G": r.polyhedron.G.tolist(),
                "h": r.polyhedron.h.tolist(),
                "K": r.K.tolist(),
                "d": r.d,
                "mode": r.mode_index,
                "region_index": r.region_index,
                "source": r.source,
                "active_set": list(r.active_set),
            }
            for r in table.regions
        ],
    }


def save_table(table, path):
    return write_text(path, canonical_json(table_to_dict(table)))


def load_table(path):
    d = json.loads(Path(path).read_text())
    regions = [
        ExplicitRegion(
            polyhedron=Polyhedron(np.array(r["G"]), np.array(r["h"]), normalize=False),
            K=np.array(r["K"]), d=float(r["d"]), mode_index=int(r["mode"]),
            source=r["source"], active_set=tuple(r["active_set"]),
            region_index=int(r.get("region_index", 0)),
        )
        for r in d["regions"]
    ]
    return ExplicitController(regions=regions, fallback=d["online_fallback"],
                              coverage=d["coverage"])


def save_metrics(metrics_by_name, path):
    """metrics_by_name: {label: Metrics or dict}."""
    payload = {}
    for name, m in metrics_by_name.items():
        payload[name] = m if isinstance(m, dict) else m.to_dict()
    return write_text(path, canonical_json(payload))


def parse_override(text):
    """`key=value` with JSON-parsed value; bare words stay strings."""
    if "=" not in text:
        raise ValidationError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
