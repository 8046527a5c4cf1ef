"""Run the five-step protocol and audit the entropy/work bookkeeping.

Usage: python scripts/scheme_ledger_audit.py [n_runs] [seed]
"""

import sys

from meterwork.scheme import SchemeConfig, run_scheme, verify_unitary_roundtrips


def main() -> None:
    n_runs = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 7

    config = SchemeConfig(n_samples=n_runs, seed=seed)
    result = run_scheme(config)

    print(f"runs = {n_runs}, seed = {seed}, beta = {config.beta}")
    print(f"delta_F = {result.delta_f:.15f}")
    print("\nledger totals (nats):")
    for party, total in sorted(result.ledger_totals.items()):
        print(f"  {party:<14} total {total:+12.1f}   per run {total / n_runs:+.1f}")
    print(f"  conservation sum = {sum(result.ledger_totals.values()):+.1f}")

    kT = 1.0 / config.beta
    print(f"\n<W_total> - <W_drive> = {result.work_gap!r}")
    print(f"sigma_total * k_B T   = {result.sigma_total * kT!r}")

    for name, rep in (("original", result.original_report),
                      ("modified", result.modified_report)):
        verdict = "pass" if rep.passed else "FAIL"
        print(f"\n{name}: mean = {rep.estimator_mean:.6f} "
              f"target = {rep.exact_value:.6f} se = {rep.standard_error:.6f} [{verdict}]")
        if rep.work_floor is not None:
            print(f"  <W> = {rep.mean_work:.6f} >= floor {rep.work_floor:.6f}: "
                  f"{rep.inequality_ok}")

    rt = verify_unitary_roundtrips(config, seed=seed)
    print("\nbranch-unitary round trips:")
    for stage in rt.stages:
        verdict = "pass" if stage.passed else "FAIL"
        print(f"  stage ({stage.name}): deviation {stage.deviation:.3e} [{verdict}]")


if __name__ == "__main__":
    main()
