"""
Shared models and closed-form values for the test suite.
"""
import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from geometry import Bump, build_model
from models import UnitVector

ROOT = Path(__file__).parent


@pytest.fixture(scope="session")
def hyperbolic():
    return build_model("hyperbolic")


@pytest.fixture(scope="session")
def constant():
    return build_model("constant-k06", kappa_base=0.6)


@pytest.fixture(scope="session")
def perturbed():
    return build_model("perturbed", epsilon=0.05, bump_center=(0.0, 1.5), bump_radius=2.0,
                       kappa_bumps=(Bump((0.0, 1.5), 2.0, 0.3),))


@pytest.fixture(scope="session")
def bumped():
    """Metric bump without a magnetic field."""
    return build_model("bumped", epsilon=0.05, bump_center=(0.0, 1.5), bump_radius=2.0)


@pytest.fixture(scope="session")
def periodic_model():
    return build_model("periodic", epsilon=0.01, bump_center=(0.0, 1.5), bump_radius=1.0,
                       kappa_base=0.3, kappa_bumps=(Bump((0.4, 1.2), 1.0, 0.1),), period=2.0)


@pytest.fixture(scope="session")
def closed_form():
    """Constant field kappa on the hyperbolic plane: a = sqrt(1 - kappa^2)."""
    kappa = 0.6
    a = math.sqrt(1.0 - kappa * kappa)
    return {
        "kappa": kappa,
        "u_minus": -a,
        "u_plus": a,
        "w_minus": -kappa / a,
        "w_plus": kappa / a,
        "ray_angle": math.atan2(a, kappa),
        "period": 2.0 / a,
        "lambda_minus": -a,
        "multiplier": math.exp(-2.0),
    }


@pytest.fixture(scope="session")
def ray_vector(closed_form):
    """Constant-field vector at i whose orbit is the Euclidean ray towards infinity."""
    return UnitVector((0.0, 1.0), closed_form["ray_angle"])


@pytest.fixture(scope="session")
def vertical():
    return UnitVector((0.0, 1.0), 0.5 * math.pi)
