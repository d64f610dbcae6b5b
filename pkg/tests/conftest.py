import numpy as np
import pytest

from safearm import ArmModel, GridSpec, build_cdf_field

_criterion_lines = []


@pytest.fixture(scope="session")
def criterion():
    """Recorder for the acceptance checklist printed after the run."""
    def record(num, title, ok, detail=""):
        line = f"criterion {num:>2} ({title}): {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  [{detail}]"
        _criterion_lines.append((num, line))
    return record


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_criterion_lines):
            terminalreporter.line(line)


@pytest.fixture(scope="session")
def arm():
    return ArmModel()


@pytest.fixture(scope="session")
def small_field(arm):
    """Coarse field for fast unit tests (builds in well under a second)."""
    return build_cdf_field(arm, GridSpec(q_cells=24, p_cells=24, oracle_cells=48))


@pytest.fixture(scope="session")
def field(arm):
    """Full-resolution field shared with the acceptance checks."""
    return build_cdf_field(arm, GridSpec())


@pytest.fixture(scope="session")
def one_link():
    """1-link arm and field; exercises the generic-N build path."""
    arm1 = ArmModel(link_lengths=(1.0,))
    spec = GridSpec(q_cells=32, p_cells=32, workspace=((-1.5, 1.5), (-1.5, 1.5)),
                    oracle_cells=64)
    return arm1, build_cdf_field(arm1, spec)


@pytest.fixture(scope="session")
def scenario_arm():
    """The arm the stock scenarios use (inflated capsule links).

    The inflation keeps the body wider than two p-cells of the default grid;
    thinner bodies get smeared by interpolation and the sampled field can
    miss them entirely.
    """
    return ArmModel(link_inflation=0.12)


@pytest.fixture(scope="session")
def scenario_field(scenario_arm):
    return build_cdf_field(scenario_arm, GridSpec())


@pytest.fixture(scope="session")
def field_file(scenario_field, tmp_path_factory):
    """scenario_field saved to disk, for CLI and server subprocesses."""
    path = tmp_path_factory.mktemp("fields") / "stock.cdf"
    scenario_field.save(path)
    return str(path)


@pytest.fixture(scope="session")
def clutter_cloud():
    """Static clutter that still leaves both planners a route at the stock
    inflation; points closer than ~0.45 m to the test target would block
    every goal configuration."""
    pts = np.array([[0.55, 1.55], [-0.6, 1.1], [1.4, -0.6],
                    [-1.1, -0.9], [0.1, 1.9], [1.9, 0.2]])
    from safearm.cdf import PointCloud
    return PointCloud(pts)
