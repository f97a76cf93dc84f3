"""Case files: JSON schema, validation and construction of the model objects.

Per-unit convention: 100 MVA system base; branch data as susceptance ``b`` or
reactance ``x`` (``b = 1/x``); device parameters on each device's own base.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .devices import DeviceError, IbrParams, PiGains, StatcomParams
from .netmodel import Branch, NetworkError, NetworkModel, OperatingCondition, kron_reduce
from .stability import DeviceSet
from .synthesis import GainBounds, GainMatrix, SynthesisSetup

SCHEMA_VERSION = 1

_PI = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2}
_RANGE = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "network", "ibrs", "operating_condition"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "network": {
            "type": "object",
            "additionalProperties": False,
            "required": ["tau", "nodes", "branches"],
            "properties": {
                "tau": {"type": "number", "minimum": 0},
                "omega0": {"type": "number", "exclusiveMinimum": 0},
                "nodes": {
                    "type": "array", "minItems": 2,
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["id", "kind"],
                        "properties": {
                            "id": {"type": "string"},
                            "kind": {"enum": ["ibr", "statcom", "passive", "infinite_bus"]},
                        },
                    },
                },
                "branches": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["from", "to"],
                        "properties": {
                            "from": {"type": "string"},
                            "to": {"type": "string"},
                            "b": {"type": "number", "exclusiveMinimum": 0},
                            "x": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "oneOf": [{"required": ["b"]}, {"required": ["x"]}],
                    },
                },
            },
        },
        "calibration": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "capacity_scale": {"type": "number", "exclusiveMinimum": 0},
                "note": {"type": "string"},
            },
        },
        "ibrs": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["node", "s_b", "params"],
                "properties": {
                    "node": {"type": "string"},
                    "s_b": {"type": "number", "exclusiveMinimum": 0},
                    "params": {
                        "type": "object", "additionalProperties": False,
                        "required": ["pll", "outer"],
                        "properties": {
                            "pll": _PI, "outer": _PI, "current": _PI,
                            "outer_mode": {"enum": ["dc_voltage", "constant_power"]},
                            "ff_time_constant": {"type": ["number", "null"], "exclusiveMinimum": 0},
                            "l_f": {"type": "number", "exclusiveMinimum": 0},
                            "c_f": {"type": "number", "exclusiveMinimum": 0},
                            "c_dc": {"type": "number", "exclusiveMinimum": 0},
                            "i_qref": {"type": "number"},
                        },
                    },
                },
            },
        },
        "statcoms": {
            "type": "object", "additionalProperties": False,
            "required": ["params", "units"],
            "properties": {
                "participation": {"enum": ["network", "colocated"]},
                "params": {
                    "type": "object", "additionalProperties": False,
                    "properties": {
                        "pll": _PI, "avc": _PI, "dc": _PI, "current": _PI,
                        "ff_time_constant": {"type": ["number", "null"], "exclusiveMinimum": 0},
                        "vm_time_constant": {"type": ["number", "null"], "exclusiveMinimum": 0},
                        "l_f": {"type": "number", "exclusiveMinimum": 0},
                        "c_dc": {"type": "number", "exclusiveMinimum": 0},
                        "shunt_c": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "units": {
                    "type": "array",
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["node", "s_bs"],
                        "properties": {
                            "node": {"type": "string"},
                            "s_bs": {"type": "number", "exclusiveMinimum": 0},
                            "ibr": {"type": "string"},
                        },
                    },
                },
            },
        },
        "operating_condition": {
            "type": "object", "additionalProperties": False,
            "required": ["p_e"],
            "properties": {
                "p_e": {"oneOf": [{"const": "rated"},
                                  {"type": "array", "items": {"type": "number",
                                                              "exclusiveMinimum": 0}}]},
                "i_qs": {"type": "array", "items": {"type": "number", "minimum": -1,
                                                   "maximum": 1}},
            },
        },
        "synthesis": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "m": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "objective_mode": {"enum": ["spectral_abscissa", "hinf"]},
                "starts": {"type": "integer", "minimum": 1},
                "max_evals": {"type": "integer", "minimum": 10},
                "bounds": {
                    "type": "object", "additionalProperties": False,
                    "properties": {k: _RANGE for k in ("k_acps", "k_acis", "k_pllps", "k_pllis")},
                },
            },
        },
        "reference": {
            "type": "object", "additionalProperties": False,
            "properties": {"statcom_pll": _PI},
        },
        "outputs": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


class ConfigError(ValueError):
    """Schema or cross-reference problem in a case file."""


def _pi(v):
    return PiGains.parse(v)


def _where(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate(data: dict) -> None:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_where(e)}: {e.message}" for e in errors[:10]]
        raise ConfigError("invalid case file:\n  " + "\n  ".join(lines))


@dataclass
class SynthesisSettings:
    m: int = 4
    seed: int = 0
    objective_mode: str = "hinf"
    starts: int = 6
    max_evals: int = 600
    bounds: GainBounds = field(default_factory=GainBounds)


@dataclass
class Case:
    """A validated case: network, devices and the nominal operating condition."""

    name: str
    net: NetworkModel
    ibr_params: list[IbrParams]
    s_b: np.ndarray
    statcom_params: StatcomParams | None
    s_bs: np.ndarray
    statcom_location: list[int] | None
    p_e: np.ndarray
    i_qs: np.ndarray
    synthesis: SynthesisSettings
    reference_pll: PiGains | None = None
    output_dir: str = "out"
    participation_location: list[int] | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def tau(self) -> float:
        return self.net.tau

    @property
    def omega0(self) -> float:
        return self.net.omega0

    @cached_property
    def red(self):
        return kron_reduce(self.net)

    @property
    def n(self) -> int:
        return len(self.ibr_params)

    @property
    def k(self) -> int:
        return int(self.s_bs.size)

    def devices(self, statcom_gains: GainMatrix | None = None) -> DeviceSet:
        params = self.statcom_params
        if params is not None and statcom_gains is not None:
            params = statcom_gains.apply(params)
        return DeviceSet(list(self.ibr_params), params, self.statcom_location,
                         self.participation_location)

    @property
    def grid_location(self) -> list[int] | None:
        """STATCOM locations as seen by ``grid_strength`` (None without STATCOMs)."""
        if self.k == 0:
            return None
        return self.participation_location or self.statcom_location

    def operating_condition(self, power_scale: float = 1.0, iq: float | None = None,
                            ) -> OperatingCondition:
        i_qs = self.i_qs if iq is None else np.full(self.k, float(iq))
        return OperatingCondition(self.p_e * power_scale, i_qs, self.s_b, self.s_bs)

    def reference_gains(self) -> GainMatrix | None:
        """Bundled STATCOM gains with the reference PLL substituted (if one is given)."""
        if self.statcom_params is None:
            return None
        params = self.statcom_params
        if self.reference_pll is not None:
            params = params.with_gains(pll=self.reference_pll)
        return GainMatrix.from_params(params)

    def without_statcoms(self) -> "Case":
        """Same network with STATCOM nodes turned passive and no STATCOM devices."""
        nodes = {nid: ("passive" if kind == "statcom" else kind)
                 for nid, kind in self.net.nodes.items()}
        net = replace(self.net, nodes=nodes)
        return replace(self, net=net, statcom_params=None, s_bs=np.zeros(0),
                       statcom_location=None, i_qs=np.zeros(0), reference_pll=None,
                       participation_location=None)

    def synthesis_setup(self, seed: int | None = None, objective_mode: str | None = None,
                        ) -> SynthesisSetup:
        if self.statcom_params is None or self.k == 0:
            raise ConfigError("synthesis needs STATCOMs in the case")
        base = self.without_statcoms()
        s = self.synthesis
        return SynthesisSetup(
            self.red, self.devices(), self.s_b, self.s_bs, self.tau, self.omega0,
            bounds=s.bounds, objective_mode=objective_mode or s.objective_mode,
            seed=s.seed if seed is None else seed, n_starts=s.starts, max_evals=s.max_evals,
            baseline_devices=base.devices(), baseline_red=base.red)


def _ibr_params(d: dict) -> IbrParams:
    kw = {"pll": _pi(d["pll"]), "outer": _pi(d["outer"])}
    if "current" in d:
        kw["current"] = _pi(d["current"])
    for key in ("outer_mode", "ff_time_constant", "l_f", "c_f", "c_dc", "i_qref"):
        if key in d:
            kw[key] = d[key]
    return IbrParams(**kw)


def _statcom_params(d: dict) -> StatcomParams:
    kw = {}
    for key in ("pll", "avc", "dc", "current"):
        if key in d:
            kw[key] = _pi(d[key])
    for key in ("ff_time_constant", "vm_time_constant", "l_f", "c_dc", "shunt_c"):
        if key in d:
            kw[key] = d[key]
    return StatcomParams(**kw)


def build_case(data: dict) -> Case:
    validate(data)
    nw = data["network"]
    nodes = {}
    for nd in nw["nodes"]:
        if nd["id"] in nodes:
            raise ConfigError(f"network/nodes: duplicate node id {nd['id']!r}")
        nodes[nd["id"]] = nd["kind"]
    branches = []
    for i, br in enumerate(nw["branches"]):
        for end in ("from", "to"):
            if br[end] not in nodes:
                raise ConfigError(
                    f"network/branches/{i}: branch {br['from']}-{br['to']} references "
                    f"unknown node {br[end]!r}")
        b = br["b"] if "b" in br else 1.0 / br["x"]
        branches.append(Branch(br["from"], br["to"], float(b)))
    try:
        net = NetworkModel(nodes, tuple(branches), float(nw["tau"]),
                           float(nw.get("omega0", 2 * np.pi * 50)))
    except NetworkError as exc:
        raise ConfigError(f"network: {exc}") from None

    scale = float(data.get("calibration", {}).get("capacity_scale", 1.0))
    by_node = {}
    for i, ib in enumerate(data["ibrs"]):
        if ib["node"] not in nodes or nodes[ib["node"]] != "ibr":
            raise ConfigError(f"ibrs/{i}: node {ib['node']!r} is not an IBR node")
        if ib["node"] in by_node:
            raise ConfigError(f"ibrs/{i}: second IBR on node {ib['node']!r}")
        try:
            by_node[ib["node"]] = (_ibr_params(ib["params"]), float(ib["s_b"]) * scale)
        except DeviceError as exc:
            raise ConfigError(f"ibrs/{i}/params: {exc}") from None
    missing = [nid for nid in net.ibr_nodes if nid not in by_node]
    if missing:
        raise ConfigError(f"ibrs: IBR node(s) without a device: {missing}")
    ibr_params = [by_node[nid][0] for nid in net.ibr_nodes]
    s_b = np.array([by_node[nid][1] for nid in net.ibr_nodes])

    st = data.get("statcoms")
    statcom_params, s_bs, location, participation = None, np.zeros(0), None, None
    if st and st["units"]:
        try:
            statcom_params = _statcom_params(st.get("params", {}))
        except DeviceError as exc:
            raise ConfigError(f"statcoms/params: {exc}") from None
        n = len(net.ibr_nodes)
        st_nodes = net.statcom_nodes
        location, sizes, used, served = [], [], set(), []
        for j, unit in enumerate(st["units"]):
            nid = unit["node"]
            kind = nodes.get(nid)
            if kind == "statcom":
                if nid in used:
                    raise ConfigError(f"statcoms/units/{j}: second STATCOM on node {nid!r}")
                used.add(nid)
                location.append(n + st_nodes.index(nid))
            elif kind == "ibr":
                location.append(net.ibr_nodes.index(nid))
            else:
                raise ConfigError(f"statcoms/units/{j}: node {nid!r} is not a STATCOM or IBR node")
            sizes.append(float(unit["s_bs"]) * scale)
            if "ibr" in unit:
                if nodes.get(unit["ibr"]) != "ibr":
                    raise ConfigError(f"statcoms/units/{j}: ibr {unit['ibr']!r} is not an IBR node")
                served.append(net.ibr_nodes.index(unit["ibr"]))
        if st.get("participation", "network") == "colocated":
            if len(served) != len(st["units"]):
                raise ConfigError("statcoms: colocated participation needs an 'ibr' on every unit")
            participation = served
        empty = [nid for nid in st_nodes if nid not in used]
        if empty:
            raise ConfigError(f"statcoms: STATCOM node(s) without a device: {empty}")
        s_bs = np.array(sizes)
    elif net.statcom_nodes:
        raise ConfigError(f"statcoms: STATCOM node(s) without a device: {net.statcom_nodes}")

    oc = data["operating_condition"]
    if oc["p_e"] == "rated":
        p_e = s_b.copy()
    else:
        p_e = np.array(oc["p_e"], float) * scale
        if p_e.size != s_b.size:
            raise ConfigError(f"operating_condition/p_e: {p_e.size} values for {s_b.size} IBRs")
    i_qs = np.array(oc.get("i_qs", [0.0] * s_bs.size), float)
    if i_qs.size != s_bs.size:
        raise ConfigError(f"operating_condition/i_qs: {i_qs.size} values for {s_bs.size} STATCOMs")
    try:
        OperatingCondition(p_e, i_qs, s_b, s_bs)
    except ValueError as exc:
        raise ConfigError(f"operating_condition: {exc}") from None

    sy = data.get("synthesis", {})
    try:
        bounds = GainBounds.parse(sy.get("bounds"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synthesis/bounds: {exc}") from None
    settings = SynthesisSettings(int(sy.get("m", 4)), int(sy.get("seed", 0)),
                                 sy.get("objective_mode", "hinf"), int(sy.get("starts", 6)),
                                 int(sy.get("max_evals", 600)), bounds)
    ref = data.get("reference", {}).get("statcom_pll")
    return Case(
        name=data.get("name", "case"), net=net, ibr_params=ibr_params, s_b=s_b,
        statcom_params=statcom_params, s_bs=s_bs, statcom_location=location,
        p_e=p_e, i_qs=i_qs, synthesis=settings,
        reference_pll=_pi(ref) if ref is not None else None,
        output_dir=data.get("outputs", {}).get("dir", "out"), raw=data,
        participation_location=participation)


def load_case(path: str | Path | None = None) -> Case:
    """Load a case file; ``None`` loads the bundled IEEE-39 case."""
    if path is None:
        text = resources.files("gscr.cases").joinpath("ieee39.json").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path or 'bundled case'}: line {exc.lineno} col {exc.colno}: "
                          f"{exc.msg}") from None
    return build_case(data)
