"""Bundled, checksummed test cases and scenario definitions.

Layout: ``data/{feeders,transmission,inverters,scenarios}/*.json`` plus
a ``CHECKSUMS`` file with one ``sha256  relpath`` line per asset.  Every
file is verified against its recorded digest when read, so tampered or
truncated bundles fail loudly with :class:`ChecksumMismatch`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ChecksumMismatch, ParseError
from ..feeder import FeederModel, load_feeder
from ..inverter import InverterSpec
from ..tso import TransmissionCase, load_transmission

_ROOT = Path(__file__).resolve().parent


def data_root() -> Path:
    return _ROOT


def _checksums(root: Path) -> dict[str, str]:
    path = root / "CHECKSUMS"
    if not path.exists():
        raise ChecksumMismatch(f"missing CHECKSUMS file under {root}")
    table = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        digest, rel = line.split(None, 1)
        table[rel.strip()] = digest
    return table


def _read_verified(root: Path, rel: str) -> bytes:
    table = _checksums(root)
    if rel not in table:
        raise ChecksumMismatch(f"{rel} is not listed in CHECKSUMS")
    blob = (root / rel).read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != table[rel]:
        raise ChecksumMismatch(f"{rel}: digest {digest[:12]}... does not match record")
    return blob


def _read_json(root: Path, rel: str):
    try:
        return json.loads(_read_verified(root, rel).decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{rel}: {exc}") from exc


@dataclass
class Scenario:
    name: str
    description: str
    feeder: FeederModel
    inverters: dict            # id -> InverterSpec
    profile: dict
    p_available_kw: np.ndarray  # per DER placement, file order
    load_scale: float
    irradiance: float
    transmission: TransmissionCase | None = None
    outage: tuple | None = None

    def spec_for(self, der_index: int) -> InverterSpec:
        return self.inverters[self.feeder.der_inverter_ids[der_index]]


def list_scenarios(root: Path | None = None) -> list[str]:
    root = root or _ROOT
    return sorted(p.stem for p in (root / "scenarios").glob("*.json"))


def load_scenario(name: str, root: Path | None = None) -> Scenario:
    """Load, verify, and assemble one named scenario bundle."""
    root = Path(root) if root is not None else _ROOT
    rel = f"scenarios/{name}.json"
    if not (root / rel).exists():
        raise ParseError(f"unknown scenario {name!r}; have {list_scenarios(root)}")
    doc = _read_json(root, rel)
    load_scale = float(doc.get("load_scale", 1.0))
    irradiance = float(doc.get("irradiance", 1.0))

    feeder_doc = _read_json(root, doc["feeder"])
    model = load_feeder(feeder_doc, load_scale=load_scale)

    inv_doc = _read_json(root, doc["inverters"])
    inverters = {}
    for rec in inv_doc["inverters"]:
        spec = InverterSpec(str(rec["id"]), float(rec["s_kva"]),
                            float(rec["p_max_kw"]), float(rec["q_max_kvar"]),
                            p_min=float(rec.get("p_min_kw", 0.0)),
                            m_pq=float(rec.get("m_pq", 2.2)),
                            b_pq=float(rec.get("b_pq", 0.0)))
        inverters[spec.inverter_id] = spec
    profile = inv_doc.get("profile", {})

    for inv_id in model.der_inverter_ids:
        if inv_id not in inverters:
            raise ParseError(f"feeder references unknown inverter {inv_id!r}")
    p_avail = np.array([irradiance * inverters[i].p_max
                        for i in model.der_inverter_ids])

    transmission = None
    if doc.get("transmission"):
        transmission = load_transmission(_read_json(root, doc["transmission"]))
    outage = tuple(doc["outage"]) if doc.get("outage") else None

    return Scenario(name=str(doc.get("name", name)),
                    description=str(doc.get("description", "")),
                    feeder=model, inverters=inverters, profile=profile,
                    p_available_kw=p_avail, load_scale=load_scale,
                    irradiance=irradiance, transmission=transmission,
                    outage=outage)
