import numpy as np
import pytest

from goafem.benchmarks import get_problem
from goafem.driver import run_goafem
from goafem.fem import energy_norm_error
from goafem.marking import verify
from goafem.mesh import Mesh

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def square2() -> Mesh:
    """Unit square split along the (1,1) diagonal; refinement edges are the diagonal."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    t = np.array([[2, 0, 1], [0, 2, 3]])
    return Mesh(v, t, np.zeros(2, dtype=np.int64))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def element_keys(mesh: Mesh) -> np.ndarray:
    """Vertex-set key per element; vertex numbering is stable under refinement."""
    t = np.sort(mesh.triangles, axis=1).astype(np.int64)
    if mesh.n_vertices >= 1 << 21:
        raise ValueError("mesh too large for 63-bit element keys")
    return (t[:, 0] << 42) | (t[:, 1] << 21) | t[:, 2]


def sons_inequality(coarse: Mesh, fine: Mesh) -> bool:
    """#(T_H minus T_h) + #T_H <= #T_h."""
    refined = np.count_nonzero(~np.isin(element_keys(coarse), element_keys(fine)))
    return refined + coarse.n_elements <= fine.n_elements


class RunAudit:
    """Per-level checks attached to every cached benchmark run."""

    def __init__(self, problem, with_energy: bool):
        self.problem = problem
        self.with_energy = with_energy
        self.prev = None
        self.energy = []
        self.min_angle = np.inf
        self.violations = []
        self.levels = 0

    def __call__(self, state):
        mesh = state.mesh
        self.levels += 1
        try:
            mesh.check()
        except ValueError as exc:
            self.violations.append(f"level {state.level}: {exc}")
        if not mesh.is_conforming():
            self.violations.append(f"level {state.level}: nonconforming")
        if self.prev is not None and not sons_inequality(self.prev, mesh):
            self.violations.append(f"level {state.level}: son-counting inequality")
        if state.marked is not None and not verify(state.marked):
            self.violations.append(f"level {state.level}: marking inequality")
        self.min_angle = min(self.min_angle, mesh.min_angle())
        if self.with_energy:
            self.energy.append(energy_norm_error(state.space, state.u,
                                                 self.problem.exact_gradient))
        self.prev = mesh


class RunCache:
    def __init__(self):
        self._runs = {}

    def get(self, name, strategy, p, theta=0.5, max_dofs=100_000, max_levels=100):
        key = (name, strategy, p, theta, max_dofs, max_levels)
        if key not in self._runs:
            problem = get_problem(name)
            audit = RunAudit(problem, with_energy=problem.exact_gradient is not None)
            history = run_goafem(problem, strategy, theta, p=p, max_dofs=max_dofs,
                                 max_levels=max_levels, on_level=audit)
            self._runs[key] = (history, audit)
        return self._runs[key]

    def audits(self):
        return [audit for _, audit in self._runs.values()]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
