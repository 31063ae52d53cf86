#pragma once

// Test-only oracle: classical fourth-order Runge-Kutta for
// d psi / dt = -2 pi i H(t) psi with H in Hz.

#include <complex>

#include <Eigen/Dense>

namespace oracle {

template <typename HamiltonianHz>
Eigen::VectorXcd rk4_evolve(HamiltonianHz&& hamiltonian, Eigen::VectorXcd psi, double t0, double t1, int steps) {
  const std::complex<double> f(0.0, -2.0 * M_PI);
  const double dt = (t1 - t0) / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * dt;
    const Eigen::MatrixXcd h0 = hamiltonian(t), hm = hamiltonian(t + 0.5 * dt), h1 = hamiltonian(t + dt);
    const Eigen::VectorXcd k1 = f * (h0 * psi);
    const Eigen::VectorXcd k2 = f * (hm * (psi + 0.5 * dt * k1));
    const Eigen::VectorXcd k3 = f * (hm * (psi + 0.5 * dt * k2));
    const Eigen::VectorXcd k4 = f * (h1 * (psi + dt * k3));
    psi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return psi;
}

} // namespace oracle
