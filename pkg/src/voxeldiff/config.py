"""XML run configuration and agent tables.

Example configuration::

    <simulation>
      <domain>
        <x_min>-1000</x_min><x_max>1000</x_max>
        <y_min>-1000</y_min><y_max>1000</y_max>
        <z_min>-1000</z_min><z_max>1000</z_max>
        <dx>20</dx><dy>20</dy><dz>20</dz>
      </domain>
      <overall>
        <max_time>60</max_time>
        <dt_diff>0.01</dt_diff><dt_mech>0.1</dt_mech><dt_cell>6</dt_cell>
      </overall>
      <parallel><backend>parallel</backend><num_threads>4</num_threads></parallel>
      <microenvironment>
        <substrate>
          <name>oxygen</name>
          <diffusion_coefficient>100000</diffusion_coefficient>
          <decay_rate>0.1</decay_rate>
          <initial_condition>38</initial_condition>
          <dirichlet_boundary_value>38</dirichlet_boundary_value>
        </substrate>
      </microenvironment>
      <agents>
        <count>10</count><placement>random</placement><seed>1</seed>
        <volume>2494</volume>
        <rates substrate="oxygen"><secretion>0</secretion><uptake>10</uptake><target>0</target></rates>
      </agents>
      <save><snapshot_interval>60</snapshot_interval><folder>output</folder></save>
    </simulation>

``<agents>`` holds either ``<file>`` (a table read by :func:`load_agents`,
relative to the config file) or ``count``/``placement`` with optional
``seed``, ``volume`` and per-substrate ``rates``.  Every element except
``domain`` is optional; unknown elements are rejected.
"""

from __future__ import annotations

import csv
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents import AgentPopulation, CellAgent, make_population
from .backend import BackendKind
from .engine import SimulationClock, integer_ratio
from .errors import ConfigError, ConfigParseError, LoadError
from .mesh import CartesianMesh, Microenvironment, SubstrateParams, nearest_voxel

DEFAULT_DT_DIFF = 0.01
DEFAULT_DT_MECH = 0.1
DEFAULT_DT_CELL = 6.0
DEFAULT_SPACING = 20.0
DEFAULT_SNAPSHOT_INTERVAL = 60.0
DEFAULT_CELL_VOLUME = 2494.0

PLACEMENTS = ("random", "center", "lattice")

_DOMAIN_KEYS = ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max", "dx", "dy", "dz")
_OVERALL_KEYS = ("max_time", "dt_diff", "dt_mech", "dt_cell")
_SUBSTRATE_KEYS = ("name", "diffusion_coefficient", "decay_rate", "initial_condition",
                   "dirichlet_boundary_value")
_RATE_KEYS = ("secretion", "uptake", "target")


@dataclass
class SubstrateConfig:
    name: str
    diffusion_coefficient: float
    decay_rate: float
    initial_condition: float = 0.0
    dirichlet_boundary_value: float | None = None

    def params(self) -> SubstrateParams:
        return SubstrateParams(self.name, self.diffusion_coefficient, self.decay_rate,
                               self.initial_condition)


@dataclass
class AgentRates:
    secretion: float = 0.0
    uptake: float = 0.0
    target: float = 0.0


@dataclass
class AgentSource:
    """Where agents come from: a table file, or ``count`` agents placed by rule."""

    file: str | None = None
    count: int = 0
    placement: str = "random"
    seed: int = 0
    volume: float = DEFAULT_CELL_VOLUME
    rates: dict[str, AgentRates] = field(default_factory=dict)


@dataclass
class SimConfig:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float
    dx: float = DEFAULT_SPACING
    dy: float = DEFAULT_SPACING
    dz: float = DEFAULT_SPACING
    max_time: float = 0.0
    dt_diff: float = DEFAULT_DT_DIFF
    dt_mech: float = DEFAULT_DT_MECH
    dt_cell: float = DEFAULT_DT_CELL
    backend: BackendKind = field(default_factory=BackendKind.serial)
    substrates: list[SubstrateConfig] = field(default_factory=list)
    agents: AgentSource = field(default_factory=AgentSource)
    snapshot_interval: float = DEFAULT_SNAPSHOT_INTERVAL
    folder: str = "output"
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def mesh(self) -> CartesianMesh:
        return CartesianMesh(self.x_min, self.x_max, self.y_min, self.y_max,
                             self.z_min, self.z_max, self.dx, self.dy, self.dz)

    def agent_file(self) -> Path | None:
        if self.agents.file is None:
            return None
        p = Path(self.agents.file)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> "SimConfig":
        for axis in "xyz":
            lo, hi = getattr(self, f"{axis}_min"), getattr(self, f"{axis}_max")
            if not hi > lo:
                raise ConfigError(f"must exceed {axis}_min ({lo})", field=f"{axis}_max")
            h = getattr(self, f"d{axis}")
            if not h > 0:
                raise ConfigError("must be positive", field=f"d{axis}")
            if round((hi - lo) / h) < 1:
                raise ConfigError("spacing exceeds the domain extent", field=f"d{axis}")
        SimulationClock(self.dt_diff, self.dt_mech, self.dt_cell, self.max_time)
        if not self.substrates:
            raise ConfigError("at least one substrate is required", field="microenvironment")
        names = [s.name for s in self.substrates]
        for s in self.substrates:
            if not s.name:
                raise ConfigError("empty substrate name", field="substrate/name")
            if names.count(s.name) > 1:
                raise ConfigError(f"duplicate substrate name {s.name!r}", field="substrate/name")
            if not s.diffusion_coefficient >= 0:
                raise ConfigError("must be >= 0", field=f"substrate[{s.name}]/diffusion_coefficient")
            if not s.decay_rate >= 0:
                raise ConfigError("must be >= 0", field=f"substrate[{s.name}]/decay_rate")
        a = self.agents
        if a.file is not None:
            if a.count:
                raise ConfigError("give either file or count, not both", field="agents")
            if not self.agent_file().is_file():
                raise ConfigError(f"agent file {self.agent_file()} not found", field="agents/file")
        if a.count < 0:
            raise ConfigError("must be >= 0", field="agents/count")
        if a.placement not in PLACEMENTS:
            raise ConfigError(f"must be one of {PLACEMENTS}", field="agents/placement")
        if not a.volume > 0:
            raise ConfigError("must be positive", field="agents/volume")
        for name, r in a.rates.items():
            if name not in names:
                raise ConfigError(f"unknown substrate {name!r}", field="agents/rates")
            for key in _RATE_KEYS:
                if not getattr(r, key) >= 0:
                    raise ConfigError("must be >= 0", field=f"agents/rates[{name}]/{key}")
        if self.snapshot_interval < 0:
            raise ConfigError("must be >= 0", field="save/snapshot_interval")
        if self.snapshot_interval > 0:
            integer_ratio(self.snapshot_interval, self.dt_diff, "save/snapshot_interval")
        return self

    def with_overrides(self, **overrides) -> "SimConfig":
        """Copy with top-level fields replaced, then validated."""
        unknown = set(overrides) - set(self.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown override(s) {sorted(unknown)}", field="overrides")
        if isinstance(overrides.get("backend"), str):
            overrides["backend"] = BackendKind.parse(overrides["backend"])
        return replace(self, **overrides).validate()

    def build_microenvironment(self) -> Microenvironment:
        env = Microenvironment(self.mesh, [s.params() for s in self.substrates])
        for i, s in enumerate(self.substrates):
            if s.dirichlet_boundary_value is not None:
                env.set_boundary_dirichlet(i, s.dirichlet_boundary_value)
        return env

    def build_agents(self, mesh: CartesianMesh | None = None) -> AgentPopulation:
        mesh = mesh or self.mesh
        names = [s.name for s in self.substrates]
        path = self.agent_file()
        if path is not None:
            return load_agents(path, mesh, names)
        return place_agents(self.agents, mesh, names)


def place_agents(source: AgentSource, mesh: CartesianMesh, names: Sequence[str]) -> AgentPopulation:
    n = source.count
    lo = np.array([mesh.x_min, mesh.y_min, mesh.z_min])
    hi = np.array([mesh.x_max, mesh.y_max, mesh.z_max])
    if source.placement == "random":
        rng = np.random.default_rng(source.seed)
        positions = lo + rng.random((n, 3)) * (hi - lo)
    elif source.placement == "center":
        positions = np.tile((lo + hi) / 2, (n, 1))
    else:
        side = max(1, math.ceil(n ** (1 / 3)))
        idx = np.array(np.unravel_index(np.arange(n), (side, side, side))).T
        positions = lo + (idx + 0.5) / side * (hi - lo)
    rates = [source.rates.get(name, AgentRates()) for name in names]
    S = [r.secretion for r in rates]
    U = [r.uptake for r in rates]
    T = [r.target for r in rates]
    agents = [CellAgent(i, positions[i], source.volume, S, U, T) for i in range(n)]
    return make_population(agents, mesh)


def _float(node: ET.Element, path: str) -> float:
    text = (node.text or "").strip()
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", field=path) from None
    if not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {text!r}", field=path)
    return value


def _int(node: ET.Element, path: str) -> int:
    text = (node.text or "").strip()
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}", field=path) from None


def _children(node: ET.Element, path: str, allowed: Sequence[str]) -> dict[str, ET.Element]:
    found = {}
    for child in node:
        if child.tag not in allowed:
            raise ConfigError("unknown element", field=f"{path}/{child.tag}")
        if child.tag in found:
            raise ConfigError("element given twice", field=f"{path}/{child.tag}")
        found[child.tag] = child
    return found


def parse_config(path) -> SimConfig:
    path = Path(path)
    text = path.read_text()
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ConfigParseError(f"malformed XML in {path}: {exc}", line=exc.position[0]) from None
    return config_from_xml(root, base_dir=path.parent)


def config_from_xml(root: ET.Element, base_dir=Path(".")) -> SimConfig:
    top = root.tag
    sections = _children(root, top, ("domain", "overall", "parallel", "microenvironment",
                                     "agents", "save"))
    if "domain" not in sections:
        raise ConfigError("missing element", field=f"{top}/domain")
    kw: dict = {}
    dom = _children(sections["domain"], f"{top}/domain", _DOMAIN_KEYS)
    for key in _DOMAIN_KEYS[:6]:
        if key not in dom:
            raise ConfigError("missing element", field=f"{top}/domain/{key}")
    for key, node in dom.items():
        kw[key] = _float(node, f"{top}/domain/{key}")

    if "overall" in sections:
        for key, node in _children(sections["overall"], f"{top}/overall", _OVERALL_KEYS).items():
            kw[key] = _float(node, f"{top}/overall/{key}")

    backend_name, workers = "serial", None
    if "parallel" in sections:
        par = _children(sections["parallel"], f"{top}/parallel", ("backend", "num_threads"))
        if "backend" in par:
            backend_name = (par["backend"].text or "").strip()
        if "num_threads" in par:
            workers = _int(par["num_threads"], f"{top}/parallel/num_threads")
    try:
        if backend_name == "serial":
            if workers not in (None, 1):
                raise ConfigError("serial backend requires num_threads = 1",
                                  field=f"{top}/parallel/num_threads")
            kw["backend"] = BackendKind.serial()
        else:
            kw["backend"] = BackendKind(backend_name, 1 if workers is None else workers)
    except ConfigError as exc:
        if exc.field and exc.field.startswith(top):
            raise
        raise ConfigError(exc.reason, field=f"{top}/parallel/{exc.field}") from None

    subs = []
    if "microenvironment" in sections:
        menv = sections["microenvironment"]
        for i, node in enumerate(menv):
            p = f"{top}/microenvironment/{node.tag}"
            if node.tag != "substrate":
                raise ConfigError("unknown element", field=p)
            p = f"{p}[{i}]"
            vals = _children(node, p, _SUBSTRATE_KEYS)
            for key in ("name", "diffusion_coefficient", "decay_rate"):
                if key not in vals:
                    raise ConfigError("missing element", field=f"{p}/{key}")
            subs.append(SubstrateConfig(
                name=(vals["name"].text or "").strip(),
                diffusion_coefficient=_float(vals["diffusion_coefficient"], f"{p}/diffusion_coefficient"),
                decay_rate=_float(vals["decay_rate"], f"{p}/decay_rate"),
                initial_condition=(_float(vals["initial_condition"], f"{p}/initial_condition")
                                   if "initial_condition" in vals else 0.0),
                dirichlet_boundary_value=(
                    _float(vals["dirichlet_boundary_value"], f"{p}/dirichlet_boundary_value")
                    if "dirichlet_boundary_value" in vals else None),
            ))
    kw["substrates"] = subs

    if "agents" in sections:
        kw["agents"] = _parse_agents(sections["agents"], f"{top}/agents")

    if "save" in sections:
        save = _children(sections["save"], f"{top}/save", ("snapshot_interval", "folder"))
        if "snapshot_interval" in save:
            kw["snapshot_interval"] = _float(save["snapshot_interval"], f"{top}/save/snapshot_interval")
        if "folder" in save:
            kw["folder"] = (save["folder"].text or "").strip()

    return SimConfig(**kw, base_dir=Path(base_dir)).validate()


def _parse_agents(node: ET.Element, path: str) -> AgentSource:
    src = AgentSource()
    seen = set()
    for child in node:
        p = f"{path}/{child.tag}"
        if child.tag in seen and child.tag != "rates":
            raise ConfigError("element given twice", field=p)
        seen.add(child.tag)
        if child.tag == "file":
            src.file = (child.text or "").strip()
        elif child.tag == "count":
            src.count = _int(child, p)
        elif child.tag == "placement":
            src.placement = (child.text or "").strip()
        elif child.tag == "seed":
            src.seed = _int(child, p)
        elif child.tag == "volume":
            src.volume = _float(child, p)
        elif child.tag == "rates":
            name = child.get("substrate")
            if not name:
                raise ConfigError("missing substrate attribute", field=p)
            if name in src.rates:
                raise ConfigError(f"rates for {name!r} given twice", field=p)
            vals = _children(child, p, _RATE_KEYS)
            src.rates[name] = AgentRates(**{k: _float(v, f"{p}/{k}") for k, v in vals.items()})
        else:
            raise ConfigError("unknown element", field=p)
    return src


def _num(v: float) -> str:
    return repr(float(v))


def config_to_xml(cfg: SimConfig) -> ET.Element:
    root = ET.Element("simulation")

    def sub(parent, tag, text=None):
        el = ET.SubElement(parent, tag)
        if text is not None:
            el.text = text
        return el

    dom = sub(root, "domain")
    for key in _DOMAIN_KEYS:
        sub(dom, key, _num(getattr(cfg, key)))
    ov = sub(root, "overall")
    for key in _OVERALL_KEYS:
        sub(ov, key, _num(getattr(cfg, key)))
    par = sub(root, "parallel")
    sub(par, "backend", cfg.backend.name)
    sub(par, "num_threads", str(cfg.backend.workers))
    menv = sub(root, "microenvironment")
    for s in cfg.substrates:
        node = sub(menv, "substrate")
        sub(node, "name", s.name)
        sub(node, "diffusion_coefficient", _num(s.diffusion_coefficient))
        sub(node, "decay_rate", _num(s.decay_rate))
        sub(node, "initial_condition", _num(s.initial_condition))
        if s.dirichlet_boundary_value is not None:
            sub(node, "dirichlet_boundary_value", _num(s.dirichlet_boundary_value))
    ag = sub(root, "agents")
    a = cfg.agents
    if a.file is not None:
        sub(ag, "file", a.file)
    else:
        sub(ag, "count", str(a.count))
    sub(ag, "placement", a.placement)
    sub(ag, "seed", str(a.seed))
    sub(ag, "volume", _num(a.volume))
    for name, r in a.rates.items():
        node = sub(ag, "rates")
        node.set("substrate", name)
        for key in _RATE_KEYS:
            sub(node, key, _num(getattr(r, key)))
    save = sub(root, "save")
    sub(save, "snapshot_interval", _num(cfg.snapshot_interval))
    sub(save, "folder", cfg.folder)
    return root


def serialize_config(cfg: SimConfig) -> str:
    root = config_to_xml(cfg)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def write_config(cfg: SimConfig, path) -> Path:
    path = Path(path)
    path.write_text(serialize_config(cfg))
    return path


def agent_header(names: Sequence[str]) -> list[str]:
    cols = ["id", "x", "y", "z", "volume"]
    for n in names:
        cols += [f"S_{n}", f"U_{n}", f"target_{n}"]
    return cols


def save_agents(agents: AgentPopulation, names: Sequence[str], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(agent_header(names))
        for a in sorted(agents.agents, key=lambda a: a.id):
            row = [str(a.id)] + [_num(v) for v in a.position] + [_num(a.volume)]
            for s in range(len(names)):
                row += [_num(a.secretion_rates[s]), _num(a.uptake_rates[s]),
                        _num(a.saturation_densities[s])]
            w.writerow(row)
    return path


def load_agents(path, mesh: CartesianMesh, names: Sequence[str] | None = None) -> AgentPopulation:
    """Read an agent table; ``names`` fixes the expected substrate order.

    Without ``names`` the substrates are taken from the header in order.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise LoadError(f"{path}: empty agent table") from None
        if names is None:
            names = [h[2:] for h in header[5::3]]
        expected = agent_header(names)
        if header != expected:
            raise LoadError(f"{path}: header {header} does not match expected {expected}")
        agents, ids = [], set()
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected):
                raise LoadError(f"expected {len(expected)} columns, got {len(row)}", row=row_no)
            try:
                agent_id = int(row[0])
                vals = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise LoadError(f"bad number: {exc}", row=row_no) from None
            if agent_id in ids:
                raise LoadError(f"duplicate agent id {agent_id}", row=row_no)
            ids.add(agent_id)
            pos, volume, rates = vals[:3], vals[3], np.array(vals[4:]).reshape(-1, 3)
            if np.any(rates < 0):
                raise LoadError("negative secretion, uptake or target value", row=row_no)
            if not volume > 0:
                raise LoadError("volume must be positive", row=row_no)
            try:
                nearest_voxel(pos, mesh)
            except Exception as exc:
                raise LoadError(f"position outside domain: {exc}", row=row_no) from None
            agents.append(CellAgent(agent_id, pos, volume, rates[:, 0], rates[:, 1], rates[:, 2]))
    return make_population(agents, mesh)
