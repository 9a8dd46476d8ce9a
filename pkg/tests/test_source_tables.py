"""Cross-check the implemented source tables against a symbolic regeneration.

The reference derivation keeps the profile functions abstract; here they are
replaced by arbitrary smooth stand-ins (nothing soliton-specific), so any
transcription slip in the numeric tables shows up immediately.
"""
import numpy as np
import pytest
import sympy as sp

import symbolic_reference as ref
from bbmlab import omega

_STANDINS = {
    "A10": "exp(-y**2/3)*(1 + y**2/4)",
    "B10": "tanh(y/2)*7/10 + y*exp(-y**2/5)",
    "A11": "exp(-y**2/2)*cos(y/3)",
    "B11": "sin(y/4)*exp(-y**2/6)",
    "A20": "exp(-y**2/4)*(2 - y**2/9)",
    "B20": "y*exp(-y**2/3)/2 + tanh(y/2)/5",
}
_AVALS = {"a10": 0.73, "a11": -0.41, "a20": 0.29}
_LAM = 0.37


@pytest.fixture(scope="module")
def reference_tables():
    return ref.derive_tables()


def _lambdify_with_standins(expr):
    y = ref.y
    subs = [(ref.Qf, sp.Rational(3, 2) * sp.sech(y / 2) ** 2)]
    for name, fn in ref.FUNCS.items():
        subs.append((fn, sp.sympify(_STANDINS[name])))
    e = expr.subs(subs).doit()
    e = e.subs([(ref.lam, _LAM)] + [(sp.Symbol(k), v) for k, v in _AVALS.items()])
    return sp.lambdify(y, e, "numpy")


def _numeric_table(xs):
    y = sp.Symbol("y")
    t = {"lam": _LAM, **_AVALS}
    qcf = sp.Rational(3, 2) * sp.sech(y / 2) ** 2
    for j in range(4):
        t[f"Q_{j}"] = sp.lambdify(y, qcf.diff(y, j), "numpy")(xs)
    for name, text in _STANDINS.items():
        e = sp.sympify(text)
        for j in range(4):
            t[f"{name}_{j}"] = sp.lambdify(y, e.diff(y, j), "numpy")(xs)
    return t


@pytest.mark.parametrize("key", [(1, 1), (2, 0), (3, 0), (2, 1), (1, 2)])
def test_source_tables_match_reference(reference_tables, key):
    xs = np.linspace(-7.0, 7.0, 57)
    t = _numeric_table(xs)
    f_num, g_num = omega._SOURCES[key](t)
    f_ref = _lambdify_with_standins(reference_tables[key][0])(xs)
    g_ref = _lambdify_with_standins(reference_tables[key][1])(xs)
    scale = max(np.abs(f_ref).max(), np.abs(g_ref).max(), 1.0)
    assert np.abs(f_num - f_ref).max() < 1e-10 * scale
    assert np.abs(g_num - g_ref).max() < 1e-10 * scale
