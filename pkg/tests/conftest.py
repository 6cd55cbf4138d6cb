import numpy as np
import pytest

from noisefield import (
    AmplitudeDampingParams,
    AmplitudeDampingTrajectory,
    InitialPureState,
    OhmicParams,
    OhmicTrajectory,
    RecurrenceParams,
    RecurrenceTrajectory,
)
from noisefield.channels import TabulatedTrajectory

EQUATOR = InitialPureState(1 / np.sqrt(2) + 0j, 1 / np.sqrt(2) + 0j)
GENERIC = InitialPureState.normalized(0.6, 0.8 * np.exp(0.7j))


def recurrence():
    return RecurrenceTrajectory(RecurrenceParams(omega0=4 * np.pi, N=30, P=1.0), EQUATOR)


def ohmic():
    return OhmicTrajectory(OhmicParams(J0=0.25, Lambda=10.0, kBT=1.0, omega0=2 * np.pi), GENERIC)


def damping():
    return AmplitudeDampingTrajectory(AmplitudeDampingParams(T1=1.0), GENERIC)


# (factory, grid) with 200-point grids covering a period, a few 1/Lambda, a few T1
SCENARIOS = {
    "recurrence": (recurrence, np.linspace(0.0, 1.0, 200)),
    "ohmic": (ohmic, np.linspace(0.0, 2.0, 200)),
    "amplitude-damping": (damping, np.linspace(0.0, 3.0, 200)),
}


def mixed_tabulated(n=200, t_f=2.0, omega0=2 * np.pi):
    """Mixed start diag(0.7, 0.3), rho10 = 0.2, under decay plus dephasing."""
    t = np.linspace(0.0, t_f, n)
    gam = -np.expm1(-t)
    r11 = 0.3 * (1.0 - gam)
    r10 = 0.2 * np.sqrt(1.0 - gam) * np.exp(1j * omega0 * t - 0.5 * t**2 / (1.0 + t))
    return TabulatedTrajectory(t, 1.0 - r11, r10)


@pytest.fixture(params=sorted(SCENARIOS))
def scenario(request):
    factory, grid = SCENARIOS[request.param]
    return factory(), grid
