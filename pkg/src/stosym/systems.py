"""Bundled example systems used by the tests, the docs and the CLI configs."""

from __future__ import annotations

from .genfun import HamiltonianSystem
from .symexpr import parse


def oscillator(sigma: float = 0.5) -> HamiltonianSystem:
    """Linear oscillator with additive noise on the momentum.

    dp = -q dt + sigma dW,  dq = p dt; quadratic drift Hamiltonian and a
    noise Hamiltonian linear in q.
    """
    return HamiltonianSystem(
        d=1,
        m=1,
        hamiltonians=(parse("(p^2+q^2)/2"), parse("-sigma*q")),
        params={"sigma": sigma},
        name="oscillator",
    )


def synchrotron(omega: float = 1.0, sigma1: float = 0.3, sigma2: float = 0.3) -> HamiltonianSystem:
    """Pendulum-type model of synchrotron oscillations with two driving noises.

    dp = -omega^2 sin(q) dt - sigma1 cos(q) o dW1 - sigma2 sin(q) o dW2,
    dq = p dt.  Both noise Hamiltonians depend on the position only.
    """
    return HamiltonianSystem(
        d=1,
        m=2,
        hamiltonians=(
            parse("-omega^2*cos(q) + p^2/2"),
            parse("sigma1*sin(q)"),
            parse("-sigma2*cos(q)"),
        ),
        params={"omega": omega, "sigma1": sigma1, "sigma2": sigma2},
        name="synchrotron",
    )


def kubo(a: float = 1.0, sigma: float = 0.5) -> HamiltonianSystem:
    """Kubo oscillator; the noise Hamiltonian depends on both p and q."""
    return HamiltonianSystem(
        d=1,
        m=1,
        hamiltonians=(parse("a*(p^2+q^2)/2"), parse("sigma*(p^2+q^2)/2")),
        params={"a": a, "sigma": sigma},
        name="kubo",
    )
