"""Convenience wiring: Melnikov profile -> certificate -> zeros -> admissible sequence."""
from __future__ import annotations

from dataclasses import dataclass, field

from .melnikov import FULL_TRACE, MelnikovIntegrand, MelnikovOptions, melnikov_profile
from .recurrence import TAND_KNU, build_time_sequence, locate_zeros, verify_P1
from .spectral import analyze_origin, derived_constants, ogap


@dataclass(frozen=True)
class SequenceConfig:
    eps: float = 1e-3
    nu: float | None = None          # None: nu0
    mode: str = TAND_KNU
    count: int = 3
    cBar: float = 0.1
    spacing: float | None = None     # None: ogap(eps, nu) rounded up to a zero
    step: float = 0.05
    melnikov: MelnikovOptions = field(default_factory=lambda: MelnikovOptions(mode=FULL_TRACE))
    delta: float = 0.5
    threads: int = 1


def build_sequence(sys, homoclinic, cfg: SequenceConfig = SequenceConfig()):
    """Returns (sequence, certificate, zeros, profile)."""
    consts = derived_constants(analyze_origin(sys, homoclinic))
    nu = consts.nu0 if cfg.nu is None else cfg.nu
    spacing = cfg.spacing
    if spacing is None:
        spacing = ogap(consts, cfg.eps, nu)
    reach = (cfg.count + 1) * spacing + 2
    profile = melnikov_profile(sys, homoclinic, -reach, reach, cfg.step, cfg.melnikov,
                               threads=cfg.threads)
    cert = verify_P1(profile, cfg.cBar)
    integrand = MelnikovIntegrand(sys, homoclinic, cfg.melnikov)

    def evaluator(t):
        return integrand.evaluate(t)[0]
    within = (-(cfg.count + 0.5) * spacing, (cfg.count + 0.5) * spacing)
    zeros = locate_zeros(profile, cert, evaluator, within=within)
    seq = build_time_sequence(cert, zeros, cfg.eps, nu, cfg.mode, cfg.count, consts,
                              evaluator=evaluator, delta=cfg.delta, spacing=cfg.spacing)
    return seq, cert, zeros, profile


def summarize_glues(eps: float, results: dict) -> dict:
    """Measured shadowing envelopes for one eps: worst sup distance and worst |alpha_j|."""
    sups = [s for r in results.values() for s in r.supDistances.values()]
    alphas = [abs(a) for r in results.values() for a in r.alphas.values() if a is not None]
    return {"eps": eps, "windows": sorted(results), "omega": max(sups),
            "omegaAlpha": max(alphas, default=0.0),
            "allPass": all(r.verified for r in results.values())}


def epsilon_sweep(sys, homoclinic, eps_list=(1e-3, 5e-4, 2.5e-4), depth: int = 1,
                  step: float = 0.1, opts=None) -> dict:
    """Glue every depth-window at each eps (spacing ogap(eps)) and report the envelopes.

    ``largestPassing`` is the largest eps in the list at which every window verified.
    """
    from .chaos import ChaosOptions, ChaosProblem, all_windows, window_label
    rows = []
    for eps in sorted(eps_list, reverse=True):
        seq, *_ = build_sequence(sys, homoclinic, SequenceConfig(eps=eps, count=2 * depth + 1,
                                                                 step=step))
        problem = ChaosProblem(sys, homoclinic, seq, eps, opts or ChaosOptions(),
                               window_depth=depth)
        results = {window_label(w): problem.glue(w, record=False) for w in all_windows(depth)}
        row = summarize_glues(eps, results)
        row["spacing"] = seq.T[1] - seq.T[0]
        rows.append(row)
    passing = [r["eps"] for r in rows if r["allPass"]]
    return {"rows": rows, "largestPassing": max(passing, default=None)}
