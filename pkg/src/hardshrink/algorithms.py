"""Name -> solver preset mapping shared by the benchmark harness and the CLI."""
import re

from .baselines import FobaConfig, LassoConfig, default_lasso_lambda, foba, ista_lasso
from .objectives import MatrixLeastSquares
from .solvers import (
    SolverConfig,
    default_step_size,
    iht_solve,
    matrix_iht_solve,
    pht_solve,
    two_stage_solve,
)

__all__ = ["ALGORITHMS", "IHT_FAMILY", "parse_algorithm", "run_algorithm"]

ALGORITHMS = ("iht", "htp", "grades", "cosamp", "sp", "ompr", "pht(l)", "ista_lasso", "foba")
IHT_FAMILY = ("iht", "htp", "grades")

_PHT = re.compile(r"^pht\((\d+)\)$")


def parse_algorithm(name):
    """Return ``(base_name, ell)``; ``ell`` is only set for ``pht(l)``.

    Raises ``ValueError`` for unknown names.
    """
    name = name.strip().lower()
    m = _PHT.match(name)
    if m:
        ell = int(m.group(1))
        if ell < 1:
            raise ValueError("pht(l) needs l >= 1")
        return "pht", ell
    if name in ALGORITHMS and name != "pht(l)":
        return name, None
    raise ValueError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")


def run_algorithm(name, obj, s, s_star=None, *, sigma=None, n=None, eta=None, ell=None,
                  max_iters=None, rng=None):
    """Run the preset called ``name`` and return ``(estimate, trace)``.

    ``s`` is the projected sparsity (rank for matrix objectives). ``sigma``
    and ``n`` feed the default lasso penalty; ``s_star`` is the FoBa target
    and the step-size level hint.
    """
    base, pht_ell = parse_algorithm(name)
    s_star = s if s_star is None else s_star
    common = {"s_star_hint": s_star}
    if max_iters is not None:
        common["max_iters"] = max_iters
    if isinstance(obj, MatrixLeastSquares):
        if base not in ("iht", "grades"):
            raise ValueError(f"{name} does not support matrix objectives")
        cfg = SolverConfig(s=s, eta=eta, **common)
        if eta is None and base == "grades":
            cfg.eta = default_step_size(obj, s, "grades", s_star, rng=rng)
        return matrix_iht_solve(obj, cfg, rng)
    if base == "iht":
        return iht_solve(obj, SolverConfig(s=s, eta=eta, **common), rng)
    if base == "htp":
        return iht_solve(obj, SolverConfig(s=s, eta=eta, fully_corrective=True, **common), rng)
    if base == "grades":
        eta = eta or default_step_size(obj, s, "grades", s_star, rng=rng)
        return iht_solve(obj, SolverConfig(s=s, eta=eta, **common), rng)
    if base == "cosamp":
        return two_stage_solve(obj, SolverConfig(s=s, ell=ell or 2 * s, **common), rng)
    if base == "sp":
        return two_stage_solve(obj, SolverConfig(s=s, ell=ell or s, **common), rng)
    if base == "ompr":
        return pht_solve(obj, SolverConfig(s=s, ell=1, eta=eta, **common), rng)
    if base == "pht":
        return pht_solve(obj, SolverConfig(s=s, ell=ell or pht_ell, eta=eta, **common), rng)
    if base == "ista_lasso":
        if sigma is None or n is None:
            raise ValueError("ista_lasso needs sigma and n for the default penalty")
        lam = default_lasso_lambda(sigma, obj.dim, n)
        return ista_lasso(obj, LassoConfig(lam=lam, **({"max_iters": max_iters} if max_iters else {})))
    if base == "foba":
        return foba(obj, FobaConfig(s_star=s_star, max_iters=max_iters))
    raise AssertionError(base)
