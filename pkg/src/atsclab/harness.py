"""Scenario configuration, the per-second simulation loop, deterministic CSV
logging, experiment orchestration and plot emission.

Loop order each second: world step -> attacker callback -> feature sampling ->
controller tick. All artifact CSVs carry a header row, fixed column order and
17-significant-digit floats, so identical (config, seed) pairs produce
byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import atsc, msgplane
from .attacker import (AttackConfig, AttackMode, ControllerAwarePolicy,
                       FixedRatePolicy, SlowPoisoningAttacker)
from .detector import (DetectorSpec, FeatureMode, detect, detection_report,
                       train_detector)
from .errors import ConfigError, DataError
from .microsim import REAL, CarFollowingParams, World
from .msgplane import FeatureSample, emit_bsm, sample_features
from .neuralnet import TrainingConfig
from .roadnet import GeometryConfig, Heading, build_arterial_network
from .svgplot import ChartStyle, Series, render_svg

OUTPUT_ROOT_ENV = "ATSCLAB_OUT"


def fmt(x: float) -> str:
    """17-significant-digit float text; bit-stable round trip."""
    return format(float(x), ".17g")


@dataclass
class DetectorSettings:
    mode: str = "baseline"
    training: TrainingConfig = field(default_factory=TrainingConfig)
    hidden1: int = 128
    hidden2: int = 8


@dataclass
class ScenarioConfig:
    seed: int = 42
    duration: float = 3600.0
    warmup: float = 600.0
    cooldown: float = 600.0
    dt: float = 1.0
    demand_vph: float = 150.0
    turn_split: dict = field(default_factory=lambda: {"through": 0.70, "left": 0.15,
                                                      "right": 0.15})
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    car_following: CarFollowingParams = field(default_factory=CarFollowingParams)
    attack: AttackConfig | None = None
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    cumulative_waiting: bool = False
    log_bsm: bool = False
    log_trajectories: bool = False

    def validate(self) -> None:
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.warmup < 0 or self.cooldown < 0:
            raise ConfigError("warm-up and cool-down must be non-negative")
        if self.warmup + self.cooldown >= self.duration:
            raise ConfigError("warm-up plus cool-down must leave an analysis window")

    @property
    def analysis_start(self) -> float:
        return self.warmup

    @property
    def analysis_end(self) -> float:
        return self.duration - self.cooldown

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.attack is not None:
            d["attack"]["mode"] = self.attack.mode.value
            d["attack"]["policy"] = {
                "kind": ("fixed_rate" if isinstance(self.attack.policy, FixedRatePolicy)
                         else "controller_aware"),
                **asdict(self.attack.policy),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "geometry" in d:
            d["geometry"] = GeometryConfig(**d["geometry"])
        if "car_following" in d:
            d["car_following"] = CarFollowingParams(**d["car_following"])
        if d.get("attack") is not None:
            a = dict(d["attack"])
            a["mode"] = AttackMode(a.get("mode", "physical"))
            pol = a.get("policy")
            if isinstance(pol, dict):
                pol = dict(pol)
                kind = pol.pop("kind", "controller_aware")
                a["policy"] = (FixedRatePolicy(**pol) if kind == "fixed_rate"
                               else ControllerAwarePolicy(**pol))
            d["attack"] = AttackConfig(**a)
        if "detector" in d:
            det = dict(d["detector"])
            if "training" in det:
                det["training"] = TrainingConfig(**det["training"])
            d["detector"] = DetectorSettings(**det)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunArtifacts:
    out_dir: Path
    feature_log: Path
    phase_log: Path
    attack_log: Path
    bsm_log: Path | None
    trajectory_log: Path | None
    manifest: Path
    samples: list[FeatureSample]
    analysis_samples: list[FeatureSample]
    inject_times: list[float]
    attack_start_abs: float | None
    eb_real_waiting: float       # cumulative real-vehicle waiting on the subject
                                 # EB approach over the analysis window, s


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_scenario(cfg: ScenarioConfig, out_dir) -> RunArtifacts:
    """Execute the full closed loop and write every artifact under `out_dir`."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    net = build_arterial_network(cfg.geometry)
    world = World(net, cfg.car_following, cfg.demand_vph, cfg.turn_split,
                  seed=cfg.seed, dt=cfg.dt,
                  cumulative_waiting_mode=cfg.cumulative_waiting)
    controllers = {n: atsc.SignalController(n) for n in net.signalized_nodes}
    row_map = {n: frozenset() for n in controllers}

    attacker = None
    attack_start_abs = None
    if cfg.attack is not None:
        attacker = SlowPoisoningAttacker(cfg.attack, net, cfg.car_following,
                                         start_offset=cfg.analysis_start)
        attack_start_abs = attacker.start_abs

    eb_edges = set(net.approach(net.subject_node, Heading.EAST).edges)

    samples: list[FeatureSample] = []
    phase_rows: list[list[str]] = []
    bsm_rows: list[list[str]] = []
    traj_rows: list[list[str]] = []
    eb_real_waiting = 0.0
    last_sample: FeatureSample | None = None

    steps = int(round(cfg.duration / cfg.dt))
    sample_every = max(1, int(round(1.0 / cfg.dt)))
    for k in range(1, steps + 1):
        t = k * cfg.dt
        world.step(row_map)

        in_analysis = cfg.analysis_start <= t < cfg.analysis_end
        if in_analysis:
            for v in world.vehicles.values():
                if (v.provenance == REAL and v.edge_id in eb_edges
                        and v.speed <= 0.1):
                    eb_real_waiting += cfg.dt

        if attacker is not None:
            if cfg.attack.mode is AttackMode.PHYSICAL:
                attacker.on_second_physical(t, world, last_sample)
            else:
                attacker.on_second_phantom(t, world, last_sample, row_map)

        if k % sample_every:
            continue  # telemetry and control run on the 1 s grid

        real_records = [emit_bsm(v, t) for v in
                        sorted(world.vehicles.values(), key=lambda v: v.vid)]
        records = list(real_records)
        if attacker is not None and cfg.attack.mode is AttackMode.PHANTOM:
            records += attacker.fake_bsms(t)
        attack_active = attack_start_abs is not None and t >= attack_start_abs
        sample = sample_features(records, net, t, attack_active=attack_active)
        samples.append(sample)
        last_sample = sample

        # overlay threat model: under a phantom attack the deployed controller
        # keeps acting on genuine telemetry; fakes exist only in the
        # logged/monitored stream
        phantom = cfg.attack is not None and cfg.attack.mode is AttackMode.PHANTOM
        control_records = real_records if phantom else records
        control_stats = {n: msgplane.node_stream_stats(control_records, net, n)
                         for n in controllers}
        for n, ctrl in controllers.items():
            row_map[n] = ctrl.tick(control_stats[n].movement_aawt(), t)
            rec = ctrl.record(t)
            phase_rows.append([fmt(t), n, rec.kind.value,
                               rec.movement.value if rec.movement else "",
                               fmt(rec.seconds_in_phase)])

        if cfg.log_bsm:
            for r in records:
                bsm_rows.append([fmt(r.t), r.vehicle_id, r.edge_id, fmt(r.lane_pos),
                                 fmt(r.speed), fmt(r.waiting), r.next_edge])
        if cfg.log_trajectories:
            for v in sorted(world.vehicles.values(), key=lambda v: v.vid):
                if v.provenance == REAL:
                    traj_rows.append([fmt(t), v.vid, v.edge_id, str(v.lane),
                                      fmt(v.pos), fmt(v.speed)])

    feature_log = out / "features.csv"
    _write_csv(feature_log, msgplane.feature_header(net),
               [msgplane.feature_row(s, fmt) for s in samples])
    phase_log = out / "phases.csv"
    _write_csv(phase_log, ["t", "node", "phase", "movement", "seconds_in_phase"],
               phase_rows)
    attack_log = out / "attack.csv"
    events = attacker.events if attacker is not None else []
    _write_csv(attack_log, ["t", "fake_id", "action", "mode", "policy_state"],
               [[fmt(e.t), e.fake_id, e.action, e.mode, e.policy_state]
                for e in events])
    bsm_log = None
    if cfg.log_bsm:
        bsm_log = out / "bsm.csv"
        _write_csv(bsm_log, ["t", "vehicle_id", "edge_id", "lane_pos", "speed",
                             "waiting", "next_edge"], bsm_rows)
    trajectory_log = None
    if cfg.log_trajectories:
        trajectory_log = out / "trajectories.csv"
        _write_csv(trajectory_log, ["t", "vehicle_id", "edge_id", "lane", "pos",
                                    "speed"], traj_rows)

    manifest = out / "manifest.json"
    with open(manifest, "w") as fh:
        json.dump({"config": cfg.to_dict(), "config_hash": cfg.config_hash(),
                   "seed": cfg.seed,
                   "entered": world.entered, "exited": world.exited},
                  fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")

    analysis = [s for s in samples
                if cfg.analysis_start <= s.t < cfg.analysis_end]
    inject_times = [e.t for e in events if e.action == "inject"]
    return RunArtifacts(out_dir=out, feature_log=feature_log, phase_log=phase_log,
                        attack_log=attack_log, bsm_log=bsm_log,
                        trajectory_log=trajectory_log, manifest=manifest,
                        samples=samples, analysis_samples=analysis,
                        inject_times=inject_times,
                        attack_start_abs=attack_start_abs,
                        eb_real_waiting=eb_real_waiting)


def load_feature_log(path) -> list[FeatureSample]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = list(reader)
    n_feeders = sum(1 for c in header if c.startswith("up_n_"))
    return msgplane.parse_feature_rows(header, rows, n_feeders=n_feeders)


@dataclass
class ExperimentResult:
    baseline: DetectorSpec
    upstream: DetectorSpec
    free_run: RunArtifacts
    attack_run: RunArtifacts
    baseline_report: object
    upstream_report: object
    report_txt: Path
    report_csv: Path


def run_experiment(cfg: ScenarioConfig, out_dir,
                   plots: bool = True) -> ExperimentResult:
    """Paired attack-free / attack runs sharing one seed, detector training on
    the attack-free log, online detection on the attack log, and the
    comparison report.
    """
    if cfg.attack is None:
        raise ConfigError("experiment config needs an attack section")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    free_cfg = ScenarioConfig.from_dict({**cfg.to_dict(), "attack": None})
    free = run_scenario(free_cfg, out / "attack_free")
    attacked = run_scenario(cfg, out / "attack")

    tcfg = cfg.detector.training
    specs: dict[FeatureMode, DetectorSpec] = {}
    curves = {}
    for mode in (FeatureMode.BASELINE, FeatureMode.UPSTREAM):
        spec, ds, curve = train_detector(free.analysis_samples, mode, tcfg,
                                         hidden1=cfg.detector.hidden1,
                                         hidden2=cfg.detector.hidden2)
        specs[mode] = spec
        curves[mode] = curve
        _write_csv(out / f"loss_{mode.value}.csv", ["epoch", "train_mae", "val_mae"],
                   [[str(i + 1), fmt(tr), fmt(va)] for i, (tr, va)
                    in enumerate(zip(curve.train_mae, curve.val_mae))])

    # surge accounting is scoped to the analysis window: verdicts only exist
    # there, so later injections cannot be flagged by construction
    window_injects = [t for t in attacked.inject_times
                      if cfg.analysis_start <= t < cfg.analysis_end]

    reports = {}
    for mode, spec in specs.items():
        verdicts = detect(spec, attacked.analysis_samples, dt=1.0)
        _write_csv(out / f"verdicts_{mode.value}.csv",
                   ["t", "observed", "predicted", "abs_error", "threshold", "flagged"],
                   [[fmt(v.t), fmt(v.observed), fmt(v.predicted), fmt(v.abs_error),
                     str(spec.threshold.effective), "1" if v.flagged else "0"]
                    for v in verdicts if v.valid])
        reports[mode] = (verdicts, detection_report(
            verdicts, window_injects, attacked.attack_start_abs))

    free_counts = [s.eb_count for s in free.analysis_samples]
    att_counts = [s.eb_count for s in attacked.analysis_samples]
    ts = [s.t for s in attacked.analysis_samples]

    lines = ["paired slow-injection experiment", "=" * 40]
    lines.append(f"seed: {cfg.seed}   attack mode: {cfg.attack.mode.value}")
    lines.append(f"attack start (absolute t): {attacked.attack_start_abs}")
    lines.append(f"EB mean count attack-free: {sum(free_counts) / len(free_counts):.3f}")
    lines.append(f"EB mean count under attack: {sum(att_counts) / len(att_counts):.3f}")
    lines.append(f"EB real-vehicle waiting attack-free: {free.eb_real_waiting:.1f} s")
    lines.append(f"EB real-vehicle waiting under attack: {attacked.eb_real_waiting:.1f} s")
    csv_rows = []
    for mode, (verdicts, rep) in reports.items():
        spec = specs[mode]
        lines.append(f"-- {mode.value} detector --")
        lines.append(f"threshold: raw {spec.threshold.raw:.3f} -> "
                     f"effective {spec.threshold.effective}")
        lines.append(f"first flag: {rep.first_flag}   latency: {rep.latency}")
        lines.append(f"false positives before attack: {rep.false_positives}")
        lines.append(f"surges: {len(rep.surges)}   flagged: {sum(rep.surges_flagged)}")
        csv_rows.append([mode.value, fmt(spec.threshold.raw),
                         str(spec.threshold.effective),
                         fmt(rep.first_flag) if rep.first_flag is not None else "",
                         fmt(rep.latency) if rep.latency is not None else "",
                         str(rep.false_positives), str(len(rep.surges)),
                         str(sum(rep.surges_flagged))])
    report_txt = out / "report.txt"
    report_txt.write_text("\n".join(lines) + "\n")
    report_csv = out / "report.csv"
    _write_csv(report_csv, ["mode", "threshold_raw", "threshold_effective",
                            "first_flag", "latency", "false_positives",
                            "surges", "surges_flagged"], csv_rows)

    if plots:
        render_svg([Series("attack-free EB count", ts, [float(c) for c in free_counts]),
                    Series("under-attack EB count", ts, [float(c) for c in att_counts])],
                   out / "eb_counts.svg",
                   ChartStyle(title="Subject EB approach vehicle count",
                              xlabel="time (s)", ylabel="vehicles"),
                   spans=reports[FeatureMode.UPSTREAM][1].surges)
        for mode, (verdicts, rep) in reports.items():
            vts = [v.t for v in verdicts if v.valid]
            render_svg([Series("absolute error", vts,
                               [v.abs_error for v in verdicts if v.valid]),
                        Series("threshold", vts,
                               [float(specs[mode].threshold.effective)] * len(vts))],
                       out / f"error_{mode.value}.svg",
                       ChartStyle(title=f"{mode.value} prediction error",
                                  xlabel="time (s)", ylabel="vehicles"))
            c = curves[mode]
            render_svg([Series("train MAE", list(range(1, len(c.train_mae) + 1)),
                               c.train_mae),
                        Series("val MAE", list(range(1, len(c.val_mae) + 1)),
                               c.val_mae)],
                       out / f"loss_{mode.value}.svg",
                       ChartStyle(title=f"{mode.value} loss profile",
                                  xlabel="epoch", ylabel="MAE (normalized)"))

    return ExperimentResult(baseline=specs[FeatureMode.BASELINE],
                            upstream=specs[FeatureMode.UPSTREAM],
                            free_run=free, attack_run=attacked,
                            baseline_report=reports[FeatureMode.BASELINE][1],
                            upstream_report=reports[FeatureMode.UPSTREAM][1],
                            report_txt=report_txt, report_csv=report_csv)


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
