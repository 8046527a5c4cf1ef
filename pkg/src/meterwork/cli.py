"""Command-line front end.

Three subcommands: ``relaxation`` (weight/entropy trajectories),
``jarzynski`` (exact and sampled work statistics for a named drive
scenario), and ``scheme`` (full five-step protocol runs with both equality
checks and the entropy ledger).

Settings merge in order: built-in defaults, then a flat ``key = value``
config file (``--config``), then explicit flags. All floating-point output
is printed with 17 significant digits so files round-trip exactly; a fixed
seed therefore produces byte-identical outputs at any worker count (see the
``METERWORK_THREADS`` environment variable).

Exit status is 0 iff every enabled check passed. A machine-readable summary
is written even when checks fail.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .errors import (
    CapacityError,
    CoherentInputError,
    CommensurabilityError,
    DegenerateDistributionError,
    NumericalConsistencyError,
    SchemeConstraintError,
    SupportError,
)
from .jarzynski import (
    DriveSchedule,
    delta_F,
    jarzynski_equality_check,
    jarzynski_exact,
    tpm_sample,
)
from .linalg import Operator
from .numeric import DEFAULT_POLICY, NumericPolicy
from .relaxation import (
    entropy_of_weight,
    simulate_direct,
    simulate_poisson_cutoff,
    simulate_statistical,
)
from .scheme import (
    EXPERIMENTER,
    MEASURED,
    READER,
    SchemeConfig,
    run_scheme,
    szilard_schedule,
    verify_unitary_roundtrips,
)
from .streams import THREADS_ENV_VAR

__all__ = ["main"]


def f17(x: float) -> str:
    """Fixed 17-significant-digit rendering (exact float round trip)."""
    return format(float(x), ".17g")


def _json_render(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_json_render(v, indent + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_json_render(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return f17(x) if math.isfinite(x) else json.dumps(str(x))
    return json.dumps(obj)


def write_json(path: Path, obj) -> None:
    path.write_text(_json_render(obj) + "\n")


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f17(value)
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(c) for c in row) + "\n")


def load_config_file(path: str) -> dict[str, str]:
    """Flat key = value document; blank lines and '#' comments ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(key: str, value: str, template):
    if isinstance(template, bool):
        word = value.lower()
        if word not in _BOOL_WORDS:
            raise ValueError(f"config key {key!r}: expected a boolean, got {value!r}")
        return _BOOL_WORDS[word]
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    return value


_COMMON_DEFAULTS = {
    "seed": 0,
    "output": "meterwork-output",
    "format": "csv",
}

# numeric-policy overrides, settable from config files as policy_<field>
_POLICY_DEFAULTS = {
    f"policy_{f.name}": getattr(DEFAULT_POLICY, f.name)
    for f in dataclass_fields(NumericPolicy)
}

_DEFAULTS = {
    "relaxation": {
        **_COMMON_DEFAULTS,
        "dt": 1.0,
        "horizon": 2.0,
        "steps": 1000,
        "description": "all",
    },
    "jarzynski": {
        **_COMMON_DEFAULTS,
        **_POLICY_DEFAULTS,
        "scenario": "commuting-quench",
        "samples": 20000,
        "steps": 0,  # 0 means the scenario default
        "beta": 1.0,
        "delta_f_override": math.nan,  # NaN means "use the closed form"
        "schedule_file": "",
    },
    "scheme": {
        **_COMMON_DEFAULTS,
        **_POLICY_DEFAULTS,
        "samples": 1000,
        "beta": 1.0,
        "eigenstate_prep": False,
        "verify_appendix_b": False,
        "j_initial": 1.0,
        "j_final": 0.25,
        "t_f": 2.0,
        "drive_steps": 40,
    },
}


def _policy_from(settings: dict) -> NumericPolicy:
    overrides = {
        f.name: settings[f"policy_{f.name}"]
        for f in dataclass_fields(NumericPolicy)
        if f"policy_{f.name}" in settings
    }
    return NumericPolicy(**overrides)


def _merge_settings(command: str, args: argparse.Namespace) -> dict:
    settings = dict(_DEFAULTS[command])
    if args.config:
        for key, value in load_config_file(args.config).items():
            if key not in settings:
                raise ValueError(
                    f"unknown config key {key!r} for {command}; "
                    f"known keys: {sorted(settings)}"
                )
            settings[key] = _coerce(key, value, settings[key])
    for key in settings:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _out_dir(settings: dict) -> Path:
    out = Path(settings["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


_DESCRIPTION_MAP = {
    "direct": simulate_direct,
    "statistical": simulate_statistical,
    "poisson": simulate_poisson_cutoff,
}


def cmd_relaxation(settings: dict) -> int:
    out = _out_dir(settings)
    dt, horizon, steps = settings["dt"], settings["horizon"], settings["steps"]
    wanted = (
        list(_DESCRIPTION_MAP) if settings["description"] == "all" else [settings["description"]]
    )
    summary: dict = {"dt": dt, "horizon": horizon, "steps": steps}
    print(f"{'description':<14} {'rho(dt)':<22} sigma(dt)")
    for name in wanted:
        traj = _DESCRIPTION_MAP[name](dt, horizon, steps)
        sigma = entropy_of_weight(traj)
        write_csv(
            out / f"relaxation_{name}.csv",
            ["t", "rho", "sigma"],
            zip(traj.times, traj.weights, sigma),
        )
        rho_dt = traj.weight_at(dt)
        sigma_dt = float(sigma[np.flatnonzero(np.isclose(traj.times, dt))[0]])
        summary[name] = {"rho_at_dt": rho_dt, "sigma_at_dt": sigma_dt}
        print(f"{name:<14} {f17(rho_dt):<22} {f17(sigma_dt)}")
    write_json(out / "relaxation_summary.json", summary)
    return 0


def _pauli_z() -> Operator:
    return Operator.from_diagonal(np.array([1.0, -1.0]))


def _pauli_x() -> Operator:
    return Operator(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex), hermitian=True)


def _scenario_schedule(settings: dict) -> DriveSchedule:
    name = settings["scenario"]
    steps = settings["steps"]
    if name == "constant":
        return DriveSchedule.constant(
            Operator.from_diagonal(np.array([0.0, 1.0])), t_f=1.0, n_steps=steps or 1
        )
    if name == "commuting-quench":
        return DriveSchedule.quench(
            Operator.from_diagonal(np.array([0.0, 1.0])),
            Operator.from_diagonal(np.array([0.0, 2.0])),
        )
    if name == "driven-qubit":
        sz, sx = _pauli_z(), _pauli_x()

        def h_at(lam: float) -> Operator:
            return Operator(
                (1.0 - lam) * sz.matrix + lam * sx.matrix, hermitian=True
            )

        return DriveSchedule.linear(h_at, t_f=1.0, n_steps=steps or 400)
    if name == "custom":
        if not settings["schedule_file"]:
            raise ValueError("scenario 'custom' needs schedule_file=PATH")
        drive = json.loads(Path(settings["schedule_file"]).read_text())
        h_i = Operator(np.array(drive["h_initial"], dtype=complex), hermitian=True)
        h_f = Operator(np.array(drive["h_final"], dtype=complex), hermitian=True)

        def h_interp(lam: float) -> Operator:
            return Operator(
                (1.0 - lam) * h_i.matrix + lam * h_f.matrix, hermitian=True
            )

        return DriveSchedule.linear(
            h_interp, t_f=float(drive["t_f"]), n_steps=steps or int(drive["n_steps"])
        )
    raise ValueError(f"unknown scenario {name!r}")


def cmd_jarzynski(settings: dict) -> int:
    out = _out_dir(settings)
    beta = settings["beta"]
    policy = _policy_from(settings)
    schedule = _scenario_schedule(settings)
    df_closed = delta_F(schedule.initial_hamiltonian(), schedule.final_hamiltonian(), beta)
    df_used = settings["delta_f_override"]
    overridden = not math.isnan(df_used)
    if not overridden:
        df_used = df_closed
    exact = jarzynski_exact(schedule, beta, policy=policy)
    samples = tpm_sample(schedule, beta, settings["samples"], settings["seed"], policy=policy)
    report = jarzynski_equality_check(samples, beta, df_used)

    if settings["format"] == "json":
        write_json(
            out / "work_samples.json",
            [
                {
                    "initial_energy": s.initial_energy,
                    "final_energy": s.final_energy,
                    "work": s.work,
                    "stream_id": s.stream_id,
                    "draw_id": s.draw_id,
                }
                for s in samples
            ],
        )
    else:
        write_csv(
            out / "work_samples.csv",
            ["initial_energy", "final_energy", "work", "stream_id", "draw_id"],
            (
                (s.initial_energy, s.final_energy, s.work, s.stream_id, s.draw_id)
                for s in samples
            ),
        )
    payload = {
        "scenario": settings["scenario"],
        "seed": settings["seed"],
        "delta_f_closed_form": df_closed,
        "delta_f_used": df_used,
        "delta_f_overridden": overridden,
        "exact_evaluation": exact,
        **report.to_dict(),
    }
    write_json(out / "jarzynski_report.json", payload)
    status = "pass" if report.passed else "FAIL"
    print(
        f"scenario={settings['scenario']} mean={f17(report.estimator_mean)} "
        f"target={f17(report.exact_value)} se={f17(report.standard_error)} [{status}]"
    )
    return 0 if report.passed else 1


def cmd_scheme(settings: dict) -> int:
    out = _out_dir(settings)
    if settings["eigenstate_prep"]:
        schedule = None  # the config default is the commuting site-diagonal drive
    else:
        schedule = szilard_schedule(
            settings["j_initial"], settings["j_final"], settings["t_f"], settings["drive_steps"]
        )
    config = SchemeConfig(
        beta=settings["beta"],
        n_samples=settings["samples"],
        seed=settings["seed"],
        barrier_schedule=schedule,
        eigenstate_prep=settings["eigenstate_prep"],
    )
    policy = _policy_from(settings)
    result = run_scheme(config, policy=policy)
    kT = 1.0 / settings["beta"]

    with open(out / "scheme_records.jsonl", "w") as fh:
        for r in result.records:
            totals = r.ledger.totals()
            fh.write(
                json.dumps(
                    {
                        "stream": r.stream_id,
                        "draw": r.draw_id,
                        "initial_sector": r.tpm_initial[0],
                        "initial_energy": f17(r.tpm_initial[1]),
                        "event_outcome": r.event_outcome,
                        "final_sector": r.tpm_final[0],
                        "final_energy": f17(r.tpm_final[1]),
                        "work_drive": f17(r.work_drive),
                        "work_reading_experimenter": f17(r.work_reading_experimenter),
                        "work_reading_reader": f17(r.work_reading_reader),
                        "work_total": f17(r.work_total),
                        "sigma_experimenter": f17(totals.get(EXPERIMENTER, 0.0)),
                        "sigma_reader": f17(totals.get(READER, 0.0)),
                        "sigma_measured": f17(totals.get(MEASURED, 0.0)),
                    }
                )
                + "\n"
            )
    write_csv(
        out / "scheme_summary.csv",
        [
            "stream",
            "draw",
            "initial_energy",
            "final_energy",
            "work_drive",
            "work_total",
            "event_outcome",
            "sigma_experimenter",
            "sigma_reader",
            "sigma_measured",
        ],
        (
            (
                r.stream_id,
                r.draw_id,
                r.tpm_initial[1],
                r.tpm_final[1],
                r.work_drive,
                r.work_total,
                r.event_outcome,
                r.ledger.totals().get(EXPERIMENTER, 0.0),
                r.ledger.totals().get(READER, 0.0),
                r.ledger.totals().get(MEASURED, 0.0),
            )
            for r in result.records
        ),
    )
    write_json(out / "scheme_report_original.json", result.original_report.to_dict())
    write_json(out / "scheme_report_modified.json", result.modified_report.to_dict())

    n = len(result.records)
    per_run = {party: total / n for party, total in result.ledger_totals.items()}
    conservation = sum(result.ledger_totals.values())
    gap_target = result.sigma_total * kT
    gap_ok = abs(result.work_gap - gap_target) <= 1e-12
    ledger_ok = abs(conservation) == 0.0
    checks = {
        "original_passed": result.original_report.passed,
        "modified_passed": result.modified_report.passed,
        "work_gap_identity": gap_ok,
        "ledger_conserved": ledger_ok,
    }
    if settings["eigenstate_prep"]:
        checks["eigenstate_all_zero"] = all(
            e.sigma_nats == 0.0 for r in result.records for e in r.ledger.entries
        )

    roundtrips = None
    if settings["verify_appendix_b"]:
        roundtrips = verify_unitary_roundtrips(config, settings["seed"], policy=policy)
        checks["roundtrips_passed"] = roundtrips.all_passed
        write_json(
            out / "roundtrip_report.json",
            {
                "event_outcome": roundtrips.event_outcome,
                "stages": [
                    {"stage": s.name, "passed": s.passed, "deviation": s.deviation}
                    for s in roundtrips.stages
                ],
            },
        )

    write_json(
        out / "scheme_summary.json",
        {
            "samples": n,
            "seed": settings["seed"],
            "beta": settings["beta"],
            "delta_f": result.delta_f,
            "sigma_total": result.sigma_total,
            "work_gap": result.work_gap,
            "work_gap_target": gap_target,
            "ledger_totals": result.ledger_totals,
            "ledger_per_run": per_run,
            "checks": checks,
            "passed": all(checks.values()),
        },
    )

    print(f"runs={n} delta_f={f17(result.delta_f)} sigma_total={f17(result.sigma_total)}")
    print(
        "ledger per run: "
        + ", ".join(f"{party}={f17(val)}" for party, val in sorted(per_run.items()))
    )
    print(
        f"<W_total> - <W_drive> = {f17(result.work_gap)} "
        f"(target {f17(gap_target)}) [{'pass' if gap_ok else 'FAIL'}]"
    )
    for name, report in (
        ("original", result.original_report),
        ("modified", result.modified_report),
    ):
        print(
            f"{name}: mean={f17(report.estimator_mean)} target={f17(report.exact_value)} "
            f"se={f17(report.standard_error)} [{'pass' if report.passed else 'FAIL'}]"
        )
    if roundtrips is not None:
        for s in roundtrips.stages:
            print(
                f"roundtrip stage ({s.name}): deviation={f17(s.deviation)} "
                f"[{'pass' if s.passed else 'FAIL'}]"
            )
    return 0 if all(checks.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meterwork",
        description="Measurement-thermodynamics simulator (hbar = k_B = 1). "
        f"Worker count override: {THREADS_ENV_VAR}.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--seed", type=int, help="root seed (64-bit unsigned)")
        p.add_argument("--output", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), help="sample export format")

    p_rel = sub.add_parser("relaxation", help="weight and entropy trajectories")
    common(p_rel)
    p_rel.add_argument("--dt", type=float, help="characteristic relaxation time")
    p_rel.add_argument("--horizon", type=float, help="simulated time span")
    p_rel.add_argument("--steps", type=int, help="grid steps")
    p_rel.add_argument(
        "--description", choices=("direct", "statistical", "poisson", "all")
    )

    p_jar = sub.add_parser("jarzynski", help="TPM work statistics for a drive scenario")
    common(p_jar)
    p_jar.add_argument(
        "--scenario", choices=("constant", "commuting-quench", "driven-qubit", "custom")
    )
    p_jar.add_argument("--samples", type=int)
    p_jar.add_argument("--steps", type=int, help="drive steps (0 = scenario default)")
    p_jar.add_argument("--beta", type=float)
    p_jar.add_argument(
        "--delta-f", dest="delta_f_override", type=float,
        help="override the closed-form free-energy difference",
    )
    p_jar.add_argument("--schedule-file", dest="schedule_file", help="custom scenario JSON")

    p_sch = sub.add_parser("scheme", help="full five-step protocol runs")
    common(p_sch)
    p_sch.add_argument("--samples", type=int)
    p_sch.add_argument("--beta", type=float)
    p_sch.add_argument(
        "--eigenstate-prep", dest="eigenstate_prep", action="store_const", const=True
    )
    p_sch.add_argument(
        "--verify-appendix-b", dest="verify_appendix_b", action="store_const", const=True
    )
    p_sch.add_argument("--j-initial", dest="j_initial", type=float)
    p_sch.add_argument("--j-final", dest="j_final", type=float)
    p_sch.add_argument("--t-f", dest="t_f", type=float)
    p_sch.add_argument("--drive-steps", dest="drive_steps", type=int)
    return parser


_COMMANDS = {
    "relaxation": cmd_relaxation,
    "jarzynski": cmd_jarzynski,
    "scheme": cmd_scheme,
}


_DOMAIN_ERRORS = (
    CapacityError,
    CoherentInputError,
    CommensurabilityError,
    DegenerateDistributionError,
    NumericalConsistencyError,
    SchemeConstraintError,
    SupportError,
    ValueError,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = _merge_settings(args.command, args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](settings)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except _DOMAIN_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
