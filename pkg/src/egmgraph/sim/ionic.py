"""Pluggable ionic models.

Potentials are in mV, time in ms and currents in pA/pF (numerically equal to
uA/uF), so a current density ``I`` changes the membrane potential at rate
``I`` mV/ms.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import root

from ..errors import InvalidParameterError


class IonicModel(ABC):
    name: str = "abstract"
    state_names: tuple[str, ...] = ()
    # potential that counts as "activated" when detecting wavefronts
    activation_threshold_mv: float = -30.0
    # (amplitude pA/pF, duration ms) that reliably excites a resting cell
    test_stimulus: tuple[float, float] = (100.0, 1.0)

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @abstractmethod
    def resting_state(self) -> tuple[float, np.ndarray]:
        """Resting potential and the per-cell state vector."""

    @abstractmethod
    def derivatives(self, V: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(dV/dt from ionic currents, dS/dt)`` for states of shape (n_states, ...)."""

    @abstractmethod
    def react(self, V: np.ndarray, S: np.ndarray, dt: float) -> None:
        """Advance the local kinetics by ``dt`` in place."""

    def initial_fields(self, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        v0, s0 = self.resting_state()
        V = np.full(shape, v0, dtype=float)
        S = np.ascontiguousarray(np.broadcast_to(s0.reshape((-1,) + (1,) * len(shape)),
                                                 (s0.size,) + tuple(shape)), dtype=float)
        return V, S


@numba.njit(cache=True, fastmath=True)
def _ms_kernel(V, h, dt, nsub, v_rest, v_amp, tau_in, tau_out, tau_open, tau_close, v_gate):
    ds = dt / nsub
    k_in = 1.0 / tau_in
    k_out = 1.0 / tau_out
    k_open = ds / tau_open
    k_close = ds / tau_close
    inv_amp = 1.0 / v_amp
    for n in range(V.size):
        v = (V[n] - v_rest) * inv_amp
        g = h[n]
        for _ in range(nsub):
            dv = g * v * v * (1.0 - v) * k_in - v * k_out
            if v < v_gate:
                g += k_open * (1.0 - g)
            else:
                g -= k_close * g
            v += ds * dv
        V[n] = v_rest + v_amp * v
        h[n] = g


@dataclass
class MitchellSchaeffer(IonicModel):
    """Two-variable excitable-medium model mapped onto a millivolt scale.

    ``tau_in`` and ``tau_out`` are the classic values shrunk by the same
    factor, which keeps the excitation threshold (about ``tau_in / tau_out``)
    while making the upstroke fast enough for 100 cm/s within the explicit
    stability limit at dx = 0.01 cm. The action potential lasts roughly
    ``tau_close * ln(tau_out / (4 tau_in))``, about 120 ms. The reaction is
    sub-stepped because ``dt / tau_in`` exceeds one at dt = 0.05 ms.
    """

    tau_in: float = 0.015
    tau_out: float = 0.3
    tau_open: float = 80.0
    tau_close: float = 75.0
    v_gate: float = 0.13
    v_rest: float = -80.0
    v_amp: float = 100.0
    substeps: int = 4

    name = "mitchell-schaeffer"
    state_names = ("h",)
    test_stimulus = (100.0, 1.0)

    def __post_init__(self) -> None:
        if min(self.tau_in, self.tau_out, self.tau_open, self.tau_close, self.v_amp) <= 0 or self.substeps < 1:
            raise InvalidParameterError("time constants, amplitude and substeps must be positive")
        self.activation_threshold_mv = self.v_rest + 0.5 * self.v_amp

    def resting_state(self) -> tuple[float, np.ndarray]:
        return self.v_rest, np.array([1.0])

    def derivatives(self, V, S):
        v = (np.asarray(V) - self.v_rest) / self.v_amp
        h = S[0]
        dv = h * v * v * (1 - v) / self.tau_in - v / self.tau_out
        dh = np.where(v < self.v_gate, (1 - h) / self.tau_open, -h / self.tau_close)
        return self.v_amp * dv, dh[None]

    def react(self, V, S, dt):
        _ms_kernel(V.reshape(-1), S[0].reshape(-1), dt, self.substeps, self.v_rest, self.v_amp,
                   self.tau_in, self.tau_out, self.tau_open, self.tau_close, self.v_gate)


_R, _T, _F = 8.3143, 310.0, 96.4867
_RTF = _R * _T / _F


@dataclass
class Courtemanche(IonicModel):
    """Human atrial myocyte kinetics with optional AF remodeling.

    Conductance scales default to the remodeled values (I_to and I_Kur at
    50 %, I_CaL at 30 %). Gates use Rush-Larsen updates, concentrations and
    the membrane potential use forward Euler.
    """

    g_to_scale: float = 0.5
    g_kur_scale: float = 0.5
    g_cal_scale: float = 0.3
    capacitance_pf: float = 100.0
    substeps: int = 2

    name = "courtemanche"
    state_names = ("m", "h", "j", "oa", "oi", "ua", "ui", "xr", "xs", "d", "f", "f_ca",
                   "u", "v", "w", "na_i", "ca_i", "k_i", "ca_rel", "ca_up")
    activation_threshold_mv = -30.0
    test_stimulus = (40.0, 2.0)

    # cell geometry (um^3) and fixed constants
    V_cell = 20100.0
    V_i = 20100.0 * 0.68
    V_rel = 0.0048 * 20100.0
    V_up = 0.0552 * 20100.0
    Na_o, K_o, Ca_o = 140.0, 5.4, 1.8
    g_Na, g_K1, g_to, g_Kr, g_Ks, g_CaL = 7.8, 0.09, 0.1652, 0.029411765, 0.12941176, 0.12375
    g_bCa, g_bNa = 0.001131, 0.0006744375
    I_NaK_max, Km_Nai, Km_Ko = 0.59933874, 10.0, 1.5
    I_NaCa_max, K_mNa, K_mCa, k_sat, gamma = 1600.0, 87.5, 1.38, 0.1, 0.35
    I_CaP_max = 0.275
    K_rel, tau_tr, tau_u, tau_fca = 30.0, 180.0, 8.0, 2.0
    I_up_max, K_up, Ca_up_max = 0.005, 0.00092, 15.0
    CMDN_max, CSQN_max, TRPN_max = 0.05, 10.0, 0.07
    Km_CMDN, Km_CSQN, Km_TRPN = 0.00238, 0.8, 0.0005
    K_Q10 = 3.0

    def __post_init__(self) -> None:
        self._rest: tuple[float, np.ndarray] | None = None

    # published initial conditions, used as the starting guess for the rest state
    _initial = np.array([-81.18, 2.908e-3, 0.9649, 0.9775, 3.043e-2, 0.9992, 4.966e-3, 0.9986,
                         3.296e-5, 1.869e-2, 1.367e-4, 0.9996, 0.7755, 0.0, 1.0, 0.9992,
                         11.17, 1.013e-4, 139.0, 1.488, 1.488])

    def _gates(self, V):
        """Steady states and time constants of the Hodgkin-Huxley gates."""
        dV = np.where(np.abs(V + 47.13) < 1e-10, 1e-10, V + 47.13)
        a_m = 0.32 * dV / (1.0 - np.exp(-0.1 * dV))
        b_m = 0.08 * np.exp(-V / 11.0)
        lo = V < -40.0
        a_h = np.where(lo, 0.135 * np.exp((V + 80.0) / -6.8), 0.0)
        b_h = np.where(lo, 3.56 * np.exp(0.079 * V) + 3.1e5 * np.exp(0.35 * V),
                       1.0 / (0.13 * (1.0 + np.exp((V + 10.66) / -11.1))))
        a_j = np.where(lo, (-127140.0 * np.exp(0.2444 * V) - 3.474e-5 * np.exp(-0.04391 * V))
                       * (V + 37.78) / (1.0 + np.exp(0.311 * (V + 79.23))), 0.0)
        b_j = np.where(lo, 0.1212 * np.exp(-0.01052 * V) / (1.0 + np.exp(-0.1378 * (V + 40.14))),
                       0.3 * np.exp(-2.535e-7 * V) / (1.0 + np.exp(-0.1 * (V + 32.0))))

        a_oa = 0.65 / (np.exp((V + 10.0) / -8.5) + np.exp((V - 30.0) / -59.0))
        b_oa = 0.65 / (2.5 + np.exp((V + 82.0) / 17.0))
        oa_inf = 1.0 / (1.0 + np.exp((V + 20.47) / -17.54))
        a_oi = 1.0 / (18.53 + np.exp((V + 113.7) / 10.95))
        b_oi = 1.0 / (35.56 + np.exp((V + 1.26) / -7.44))
        oi_inf = 1.0 / (1.0 + np.exp((V + 43.1) / 5.3))
        ua_inf = 1.0 / (1.0 + np.exp((V + 30.3) / -9.6))
        a_ui = 1.0 / (21.0 + np.exp((V - 185.0) / -28.0))
        b_ui = np.exp((V - 158.0) / 16.0)
        ui_inf = 1.0 / (1.0 + np.exp((V - 99.45) / 27.48))

        vx = np.where(np.abs(V + 14.1) < 1e-10, 1e-10, V + 14.1)
        a_xr = 3e-4 * vx / (1.0 - np.exp(vx / -5.0))
        vy = np.where(np.abs(V - 3.3328) < 1e-10, 1e-10, V - 3.3328)
        b_xr = 7.3898e-5 * vy / (np.exp(vy / 5.1237) - 1.0)
        xr_inf = 1.0 / (1.0 + np.exp((V + 14.1) / -6.5))
        vs = np.where(np.abs(V - 19.9) < 1e-10, 1e-10, V - 19.9)
        a_xs = 4e-5 * vs / (1.0 - np.exp(vs / -17.0))
        b_xs = 3.5e-5 * vs / (np.exp(vs / 9.0) - 1.0)
        xs_inf = (1.0 + np.exp((V - 19.9) / -12.7)) ** -0.5

        d_inf = 1.0 / (1.0 + np.exp((V + 10.0) / -8.0))
        vd = np.where(np.abs(V + 10.0) < 1e-10, 1e-10, V + 10.0)
        tau_d = (1.0 - np.exp(vd / -6.24)) / (0.035 * vd * (1.0 + np.exp(vd / -6.24)))
        f_inf = np.exp(-(V + 28.0) / 6.9) / (1.0 + np.exp(-(V + 28.0) / 6.9))
        tau_f = 9.0 / (0.0197 * np.exp(-0.0337 ** 2 * (V + 10.0) ** 2) + 0.02)
        vw = np.where(np.abs(V - 7.9) < 1e-10, 1e-10, V - 7.9)
        tau_w = 6.0 * (1.0 - np.exp(-vw / 5.0)) / ((1.0 + 0.3 * np.exp(-vw / 5.0)) * vw)
        w_inf = 1.0 - 1.0 / (1.0 + np.exp(-(V - 40.0) / 17.0))

        inf = [a_m / (a_m + b_m), a_h / (a_h + b_h), a_j / (a_j + b_j),
               oa_inf, oi_inf, ua_inf, ui_inf, xr_inf, xs_inf, d_inf, f_inf]
        tau = [1.0 / (a_m + b_m), 1.0 / (a_h + b_h), 1.0 / (a_j + b_j),
               1.0 / ((a_oa + b_oa) * self.K_Q10), 1.0 / ((a_oi + b_oi) * self.K_Q10),
               1.0 / ((a_oa + b_oa) * self.K_Q10), 1.0 / ((a_ui + b_ui) * self.K_Q10),
               1.0 / (a_xr + b_xr), 0.5 / (a_xs + b_xs), tau_d, tau_f]
        return inf, tau, w_inf, tau_w

    def _currents(self, V, S):
        (m, h, j, oa, oi, ua, ui, xr, xs, d, f, fca, u, v, w,
         nai, cai, ki, carel, caup) = S
        E_Na = _RTF * np.log(self.Na_o / nai)
        E_K = _RTF * np.log(self.K_o / ki)
        E_Ca = 0.5 * _RTF * np.log(self.Ca_o / cai)
        c = {}
        c["Na"] = self.g_Na * m ** 3 * h * j * (V - E_Na)
        c["K1"] = self.g_K1 * (V - E_K) / (1.0 + np.exp(0.07 * (V + 80.0)))
        c["to"] = self.g_to_scale * self.g_to * oa ** 3 * oi * (V - E_K)
        g_kur = 0.005 + 0.05 / (1.0 + np.exp((V - 15.0) / -13.0))
        c["Kur"] = self.g_kur_scale * g_kur * ua ** 3 * ui * (V - E_K)
        c["Kr"] = self.g_Kr * xr * (V - E_K) / (1.0 + np.exp((V + 15.0) / 22.4))
        c["Ks"] = self.g_Ks * xs ** 2 * (V - E_K)
        c["CaL"] = self.g_cal_scale * self.g_CaL * d * f * fca * (V - 65.0)
        sigma = (np.exp(self.Na_o / 67.3) - 1.0) / 7.0
        f_nak = 1.0 / (1.0 + 0.1245 * np.exp(-0.1 * V / _RTF) + 0.0365 * sigma * np.exp(-V / _RTF))
        c["NaK"] = (self.I_NaK_max * f_nak / (1.0 + (self.Km_Nai / nai) ** 1.5)
                    * self.K_o / (self.K_o + self.Km_Ko))
        c["NaCa"] = (self.I_NaCa_max
                     * (np.exp(self.gamma * V / _RTF) * nai ** 3 * self.Ca_o
                        - np.exp((self.gamma - 1.0) * V / _RTF) * self.Na_o ** 3 * cai)
                     / ((self.K_mNa ** 3 + self.Na_o ** 3) * (self.K_mCa + self.Ca_o)
                        * (1.0 + self.k_sat * np.exp((self.gamma - 1.0) * V / _RTF))))
        c["bNa"] = self.g_bNa * (V - E_Na)
        c["bCa"] = self.g_bCa * (V - E_Ca)
        c["CaP"] = self.I_CaP_max * cai / (0.0005 + cai)
        return c

    def _calcium(self, V, S, c):
        """Release gates' targets and concentration derivatives (fluxes scaled by the capacitance)."""
        (_, _, _, _, _, _, _, _, _, _, _, fca, u, v, w, nai, cai, ki, carel, caup) = S
        Cm = self.capacitance_pf
        i_rel = self.K_rel * u ** 2 * v * w * (carel - cai)
        i_tr = (caup - carel) / self.tau_tr
        i_up = self.I_up_max / (1.0 + self.K_up / cai)
        i_leak = self.I_up_max * caup / self.Ca_up_max
        Fn = 1e3 * (1e-15 * self.V_rel * i_rel - 1e-15 / (2.0 * _F) * (0.5 * c["CaL"] - 0.2 * c["NaCa"]) * Cm)
        u_inf = 1.0 / (1.0 + np.exp(-(Fn - 3.4175e-13) / 1.367e-15))
        tau_v = 1.91 + 2.09 * u_inf
        v_inf = 1.0 - 1.0 / (1.0 + np.exp(-(Fn - 6.835e-14) / 1.367e-15))
        fca_inf = 1.0 / (1.0 + cai / 0.00035)

        dna = Cm * (-3.0 * c["NaK"] - 3.0 * c["NaCa"] - c["bNa"] - c["Na"]) / (self.V_i * _F)
        dk = Cm * (2.0 * c["NaK"] - c["K1"] - c["to"] - c["Kur"] - c["Kr"] - c["Ks"]) / (self.V_i * _F)
        b1 = (Cm * (2.0 * c["NaCa"] - c["CaP"] - c["CaL"] - c["bCa"]) / (2.0 * self.V_i * _F)
              + (self.V_up * (i_leak - i_up) + i_rel * self.V_rel) / self.V_i)
        b2 = (1.0 + self.TRPN_max * self.Km_TRPN / (cai + self.Km_TRPN) ** 2
              + self.CMDN_max * self.Km_CMDN / (cai + self.Km_CMDN) ** 2)
        dcai = b1 / b2
        dcaup = i_up - i_leak - i_tr * self.V_rel / self.V_up
        dcarel = (i_tr - i_rel) / (1.0 + self.CSQN_max * self.Km_CSQN / (carel + self.Km_CSQN) ** 2)
        return (fca_inf, u_inf, v_inf, tau_v), (dna, dcai, dk, dcarel, dcaup)

    def derivatives(self, V, S):
        V = np.asarray(V, dtype=float)
        c = self._currents(V, S)
        inf, tau, w_inf, tau_w = self._gates(V)
        (fca_inf, u_inf, v_inf, tau_v), conc = self._calcium(V, S, c)
        dS = np.empty_like(S)
        for n in range(11):
            dS[n] = (inf[n] - S[n]) / tau[n]
        dS[11] = (fca_inf - S[11]) / self.tau_fca
        dS[12] = (u_inf - S[12]) / self.tau_u
        dS[13] = (v_inf - S[13]) / tau_v
        dS[14] = (w_inf - S[14]) / tau_w
        for n, dc in zip((15, 16, 17, 18, 19), conc):
            dS[n] = dc
        return -sum(c.values()), dS

    def react(self, V, S, dt):
        ds = dt / self.substeps
        for _ in range(self.substeps):
            c = self._currents(V, S)
            inf, tau, w_inf, tau_w = self._gates(V)
            (fca_inf, u_inf, v_inf, tau_v), conc = self._calcium(V, S, c)
            dv = -sum(c.values())
            for n in range(11):
                S[n] = inf[n] + (S[n] - inf[n]) * np.exp(-ds / tau[n])
            S[11] = fca_inf + (S[11] - fca_inf) * np.exp(-ds / self.tau_fca)
            S[12] = u_inf + (S[12] - u_inf) * np.exp(-ds / self.tau_u)
            S[13] = v_inf + (S[13] - v_inf) * np.exp(-ds / tau_v)
            S[14] = w_inf + (S[14] - w_inf) * np.exp(-ds / tau_w)
            for n, dc in zip((15, 16, 17, 18, 19), conc):
                S[n] += ds * dc
            V += ds * dv

    def resting_state(self) -> tuple[float, np.ndarray]:
        """Fixed point of the full kinetics, found from the published initial values."""
        if self._rest is None:
            def rhs(y):
                dv, ds = self.derivatives(np.array(y[0]), y[1:])
                return np.concatenate([[dv], ds])
            x0 = self._initial.copy()
            x0[13] = 1e-12
            sol = root(rhs, x0, method="hybr", options={"xtol": 1e-13})
            if not sol.success:
                raise RuntimeError(f"resting state not found: {sol.message}")
            self._rest = (float(sol.x[0]), sol.x[1:].copy())
        v0, s0 = self._rest
        return v0, s0.copy()


MODELS = {"mitchell-schaeffer": MitchellSchaeffer, "courtemanche": Courtemanche}


def make_ionic_model(name: str, **params) -> IonicModel:
    try:
        return MODELS[name](**params)
    except KeyError:
        raise InvalidParameterError(f"unknown ionic model {name!r}; choose from {sorted(MODELS)}") from None
