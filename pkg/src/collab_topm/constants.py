"""Tunable constants, collected in one overridable block."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Constants:
    # Budget multipliers of the centralized, simple and recursive solvers.
    c1: float = 8.0
    c2: float = 8.0
    c0: float = 16.0
    # Multiplier of the general solver's budget over the recursive solver's.
    c_general: float = 16.0
    # Best-arm budget functions f and g, and the reduction thresholds.
    C_f: float = 20.0
    C_g: float = 2.0
    c_A: float = 32.0
    c_R: float = 0.03125
    fixed_conf_round_cap: int = 64
    # Batched subsample runs draw a normal approximation to a reward sum once its
    # binomial variance reaches this value.
    normal_approx_var: float = 1e6
    # Resource guard on the number of subsample copies per reduction call.
    max_reduction_copies: int = 4_000_000

    def override(self, **values) -> "Constants":
        known = {f.name: f.type for f in fields(self)}
        unknown = set(values) - set(known)
        if unknown:
            raise KeyError(f"unknown constants: {sorted(unknown)}")
        cast = {k: (int(v) if isinstance(getattr(self, k), int) else float(v)) for k, v in values.items()}
        return replace(self, **cast)


DEFAULT = Constants()
