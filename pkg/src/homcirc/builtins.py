"""Embedded netlists for the shipped example circuits.

These back the CLI ``--builtin`` flag and the regression suite, so tests
need no external files.  ``default_scenario`` supplies the initial state
and horizon used when no simulation config is given.
"""

from __future__ import annotations

from . import netlist

VDP_LAPSHIN = """\
circuit vdp_lapshin
ground 0
node 0 1
# parallel Van der Pol tank: linear capacitor, hysteresis-loop inductor,
# cubic voltage-controlled resistor.  C is calibrated so that the published
# initial point (0.500, -1.805) lies on the singularity-crossing separatrix
# through the flux extremum at u_l = -pi/2.
branch 1 kind=capacitor from=1 to=0 model=linear_c C=0.149843558193
branch 2 kind=inductor from=0 to=1 model=lapshin m=3 n=3 alpha=0.2 beta=1 gamma=1 delta=0.05
branch 3 kind=resistor from=1 to=0 model=vcontrolled g="-u + u^3"
"""

MLC_COUPLED = """\
circuit mlc_coupled
ground 0
node 0 1 2 3 4
# two Murali-Lakshmanan-Chua cells (C = L = 1, sources nulled) coupled by
# resistor 5; resistors 2 and 4 are the nonlinear elements.  r1 = r3 = 2
# keeps the origin off the singular set (r1 = r3 = 1 makes K(0) = 0 exactly
# for every coupling value).
branch 1 kind=resistor from=1 to=0 model=linear_r p=1 q=2
branch 2 kind=resistor from=2 to=0 model=vcontrolled g="-u + u^3"
branch 3 kind=resistor from=3 to=0 model=linear_r p=1 q=2
branch 4 kind=resistor from=4 to=0 model=vcontrolled g="-u + u^3"
branch 5 kind=resistor from=2 to=4 model=linear_r p=1 q=1
branch 6 kind=capacitor from=1 to=2 model=linear_c C=1
branch 7 kind=capacitor from=3 to=4 model=linear_c C=1
branch 8 kind=inductor from=1 to=0 model=linear_l L=1
branch 9 kind=inductor from=3 to=0 model=linear_l L=1
"""

MC_FLUX = """\
circuit mc_flux
ground 0
node 0 1
branch 1 kind=capacitor from=1 to=0 model=linear_c C=1
branch 2 kind=memristor from=0 to=1 model=cubic_memristor control=flux
"""

MC_CHARGE = """\
circuit mc_charge
ground 0
node 0 1
branch 1 kind=capacitor from=1 to=0 model=linear_c C=1
branch 2 kind=memristor from=0 to=1 model=cubic_memristor control=charge
"""

RC_LINEAR = """\
circuit rc_linear
ground 0
node 0 1
branch 1 kind=capacitor from=1 to=0 model=linear_c C=1
branch 2 kind=resistor from=1 to=0 model=linear_r p=1 q=1
"""

NETLISTS = {
    "vdp_lapshin": VDP_LAPSHIN,
    "mlc_coupled": MLC_COUPLED,
    "mc_flux": MC_FLUX,
    "mc_charge": MC_CHARGE,
    "rc_linear": RC_LINEAR,
}

# initial values keyed by branch id, plus the default integration horizon
SCENARIOS = {
    "vdp_lapshin": {"initial": {"1": 0.5, "2": -1.805}, "t_end": 3.6},
    "mlc_coupled": {"initial": {"6": 0.1, "7": -0.08, "8": 0.05, "9": -0.04}, "t_end": 2.0},
    "mc_flux": {"initial": {"1": 0.4, "2": 0.0}, "t_end": 2.0},
    "mc_charge": {"initial": {"1": 0.1, "2": 0.0}, "t_end": 2.0},
    "rc_linear": {"initial": {"1": 1.0}, "t_end": 1.0},
}


def names() -> list[str]:
    return sorted(NETLISTS)


def netlist_text(name: str) -> str:
    try:
        return NETLISTS[name]
    except KeyError:
        raise KeyError(f"unknown builtin circuit {name!r}; available: {names()}")


def load(name: str, validate: bool = True) -> netlist.Circuit:
    return netlist.load(netlist_text(name), validate=validate)


def default_scenario(name: str) -> dict:
    return dict(SCENARIOS.get(name, {"initial": {}, "t_end": 1.0}))
