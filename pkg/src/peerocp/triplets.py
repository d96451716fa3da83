"""Coefficient sets of the two third-order, four-stage Peer triplets.

A triplet bundles a starting method ``(A0, K)``, a standard method
``(A, K, B(sigma))`` and an end method ``(AN, K)``.  The lower triangular
surrogates ``At0``/``AtN`` drive the stage-by-stage boundary iterations.

Rational data are kept as :class:`fractions.Fraction` (decimal literals are
converted exactly, too) and turned into binary floating point once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

__all__ = [
    "PeerTriplet",
    "build_triplet",
    "known_triplets",
    "assemble_Bhat",
    "assemble_B",
    "vandermonde",
    "pascal",
    "shift_matrix",
    "ratio_scaling",
    "flip",
    "triplet_to_dict",
    "triplet_from_dict",
    "dump_coefficients",
    "load_coefficients",
]


# -- Vandermonde / Pascal toolkit ---------------------------------------------

def vandermonde(c, r):
    """Return ``V_r = (1, c, ..., c^{r-1})`` of shape ``(len(c), r)``."""
    return np.vander(np.asarray(c, dtype=float), r, increasing=True)


def pascal(r):
    """Upper triangular Pascal matrix with entries ``binom(j, i)``."""
    return np.array([[comb(j, i) for j in range(r)] for i in range(r)], dtype=float)


def shift_matrix(r):
    """Scaled shift ``E~_r`` with ``(i, i+1)`` entry ``i`` (one-based)."""
    return np.diag(np.arange(1.0, r), 1)


def ratio_scaling(r, sigma):
    return np.diag(float(sigma) ** np.arange(r))


def flip(s):
    """Flip permutation ``Pi`` reversing the stage order."""
    return np.eye(s)[::-1]


# -- raw coefficient tables ----------------------------------------------------

def _F(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def _fmat(rows):
    return [[_F(v) for v in row] for row in rows]


# Laurent coefficients {power: value} for the free entries of Bhat(sigma).
# Keys are zero-based (row, col); the first row of Bhat is all ones.
_VGI = dict(
    c=["0", "1/3", "2/3", "1"],
    kappa=["1/8", "3/8", "3/8", "1/8"],
    A=[["1", "0", "0", "0"],
       ["-9/4", "9/4", "0", "0"],
       ["9/4", "-9/2", "9/4", "0"],
       ["-1", "9/4", "-9/4", "1"]],
    A0=[["47161/23112", "945/1712", "9/856", "-113/1712"],
        ["-41383/7704", "1017/1712", "-27/856", "339/1712"],
        ["41383/7704", "-4869/1712", "1953/856", "-339/1712"],
        ["-47161/23112", "2907/1712", "-1935/856", "1825/1712"]],
    AN=[["1825/1712", "-339/1712", "339/1712", "-113/1712"],
        ["-1935/856", "1953/856", "-27/856", "9/856"],
        ["2907/1712", "-4869/1712", "1017/1712", "945/1712"],
        ["-47161/23112", "41383/7704", "-41383/7704", "47161/23112"]],
    diag0=["154/75", "69/40", "219/94", "67/63"],
    diagN=["67/63", "219/94", "69/40", "154/75"],
    bhat={
        (1, 3): {-1: "1/36"},
        (2, 3): {},
        (3, 0): {},
        (3, 1): {1: "1/36"},
        (3, 2): {1: "1/18"},
        (3, 3): {1: "132/804", -1: "65/804", 0: "-149/804"},
    },
    W=[["1", "-2", "24/5", "-9/2"],
       ["1", "-4/3", "0", "3/2"],
       ["1", "-2/3", "-8/5", "3/2"],
       ["1", "0", "0", "0"]],
    sigma_range=(0.57, 2.10),
    grid_class="general",
    alpha_deg=61.59,
    printed={
        "err3": 9.8e-3, "err3_adj": 9.8e-3,
        "err3_0": 5.2e-3, "err3_0_adj": 9.5e-3,
        "err3_N": 9.5e-3, "err3_N_adj": 5.2e-3,
        "rho_real_0": 6.4e-2, "rho_alpha_0": 0.155, "mu_0": 4.31,
        "rho_real_N": 6.4e-2, "rho_alpha_N": 0.155, "mu_N": 4.31,
    },
)

_A41_VSI = "0.1010743874247749"

_VSI = dict(
    c=["144997/389708", "73/748", "77297572/117896267", "1"],
    kappa=["0.2089552772313791", "0.2461266069992848",
           "0.4259606950456414", "0.1189574207236947"],
    A=[["0.7588470158140062", "0", "0", "0"],
       ["0.4346633458753195", "0.5989561692950702", "0", "0"],
       ["-3.295204661275873", "-0.3671669165116753", "2.473930545531403", "0"],
       ["2.101694299586548", "-0.2317892527833949", "-2.473930545531403", "1"]],
    A0=[["1.26852968140859992", "-2.79702966259295784", "0.0151774841161155076", "0"],
        ["0.254440961986028910", "1.58797813851094452", "-0.00536671649536513773", "0"],
        ["-3.75232398970999177", "2.14140637287657549", "2.46031830832026582", "0"],
        ["2.22935334631536294", "-0.932354848794562167", "-2.47012907594101619", "1"]],
    AN=[["0.721680741868241430", "0.0131418918926231641",
         "0.0333333333333333333", "-0.00930895128019174555"],
        ["0.123032993110224916", "0.709147801969229717",
         "0.279492058866634697", "-0.078053338775699573"],
        ["-1.03159221459763137", "-1.16757403034966595",
         "0.443763401719389714", "0.566961810971761768"],
        ["5.56340552222272135", "-1.45584078718664692",
         "-5.57863709363081650", "1.86704685986649197"]],
    diag0=["1.58950617283950617", "1.66216216216216216", "2.47", "1"],
    diagN=["0.725", "0.681818181818181818", "2", "1.91525423728813559"],
    bhat={
        (1, 3): {-1: "0.02321239244678227"},
        (2, 3): {},
        (3, 0): {0: _A41_VSI},
        (3, 1): {0: _A41_VSI, 1: "0.003586671392069201"},
        (3, 2): {0: _A41_VSI, 1: "0.007173342784138403", 2: "-0.002465255918355442"},
        (3, 3): {0: "0.0078782707622298066", 1: "0.1683589306029579",
                 2: "-0.1125", 3: "0.025"},
    },
    W=None,
    sigma_range=(0.65, 1.80),
    grid_class="smooth",
    alpha_deg=83.74,
    printed={
        "err3": 5.1e-2, "err3_adj": 3.2e-2,
        "err3_0": 5.2e-3, "err3_0_adj": 2.1e-2,
        "err3_N": 6.7e-2, "err3_N_adj": 4.1e-2,
        "rho_real_0": 3.4e-2, "rho_alpha_0": 0.126, "mu_0": 5.65,
        "rho_real_N": 6.6e-2, "rho_alpha_N": 0.217, "mu_N": 2.55,
    },
)

_TABLES = {"AP4o33vgi": _VGI, "AP4o33vsi": _VSI}


def known_triplets():
    return sorted(_TABLES)


# -- the triplet ---------------------------------------------------------------

def _frozen(x):
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PeerTriplet:
    """Immutable coefficient set of one Peer triplet.

    ``bhat`` maps zero-based ``(row, col)`` positions of the free entries of
    ``Bhat(sigma)`` to Laurent coefficients ``{power: Fraction}``.  ``exact``
    keeps the rational source data used for bit-exact dumps and for the
    exact flip checks.
    """

    name: str
    c: np.ndarray
    kappa: np.ndarray
    A: np.ndarray
    A0: np.ndarray
    AN: np.ndarray
    At0: np.ndarray
    AtN: np.ndarray
    a: np.ndarray
    w: np.ndarray
    bhat: dict
    W: np.ndarray | None
    sigma_range: tuple
    grid_class: str
    alpha_deg: float
    printed: dict = field(default_factory=dict)
    exact: dict = field(default_factory=dict, repr=False)

    s: int = 4
    q: int = 3

    @property
    def K(self):
        return np.diag(self.kappa)

    @property
    def V(self):
        return vandermonde(self.c, self.s)

    def boundary(self, which):
        """Return ``(A_b, At_b)`` for ``which`` in ``{"start", "end"}``."""
        if which == "start":
            return self.A0, self.At0
        if which == "end":
            return self.AN, self.AtN
        raise ValueError(f"boundary must be 'start' or 'end', got {which!r}")

    def Bhat(self, sigma):
        return assemble_Bhat(self, sigma)

    def B(self, sigma):
        return assemble_B(self, sigma)

    def Bbar(self, sigma):
        """Stability matrix ``A^{-1} B(sigma)`` of the standard method."""
        return np.linalg.solve(self.A, self.B(sigma))

    def interpolation_row(self, theta):
        """Lagrange weights ``l`` with ``l @ Y`` the stage polynomial at ``theta``."""
        theta = float(theta)
        powers = theta ** np.arange(self.s)
        return np.linalg.solve(self.V.T, powers)


def _laurent(coeffs, sigma):
    return sum(float(coeffs[p]) * sigma ** p for p in sorted(coeffs)) if coeffs else 0.0


def assemble_Bhat(triplet, sigma):
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError(f"stepsize ratio must be positive, got {sigma}")
    s = triplet.s
    Bh = np.zeros((s, s))
    Bh[0, :] = 1.0
    for (i, j), coeffs in triplet.bhat.items():
        Bh[i, j] = _laurent(coeffs, sigma)
    return Bh


def assemble_B(triplet, sigma):
    """``B(sigma) = V^{-T} Bhat(sigma) V^{-1}``."""
    V = triplet.V
    Bh = assemble_Bhat(triplet, sigma)
    return np.linalg.solve(V.T, np.linalg.solve(V.T, Bh.T).T)


def _build(name, table):
    c = [_F(x) for x in table["c"]]
    kappa = [_F(x) for x in table["kappa"]]
    A = _fmat(table["A"])
    A0 = _fmat(table["A0"])
    AN = _fmat(table["AN"])
    d0 = [_F(x) for x in table["diag0"]]
    dN = [_F(x) for x in table["diagN"]]
    s = len(c)
    At0 = [[A0[i][j] if j < i else (d0[i] if j == i else Fraction(0)) for j in range(s)]
           for i in range(s)]
    AtN = [[AN[i][j] if j < i else (dN[i] if j == i else Fraction(0)) for j in range(s)]
           for i in range(s)]
    a = [sum(row) for row in A0]
    w = [sum(AN[i][j] for i in range(s)) for j in range(s)]
    bhat = {tuple(k): {int(p): _F(v) for p, v in coeffs.items()}
            for k, coeffs in table["bhat"].items()}
    W = _fmat(table["W"]) if table.get("W") is not None else None
    exact = dict(c=c, kappa=kappa, A=A, A0=A0, AN=AN, At0=At0, AtN=AtN, a=a, w=w,
                 diag0=d0, diagN=dN, W=W)
    return PeerTriplet(
        name=name,
        c=_frozen(c),
        kappa=_frozen(kappa),
        A=_frozen(A),
        A0=_frozen(A0),
        AN=_frozen(AN),
        At0=_frozen(At0),
        AtN=_frozen(AtN),
        a=_frozen(a),
        w=_frozen(w),
        bhat=bhat,
        W=_frozen(W) if W is not None else None,
        sigma_range=tuple(table["sigma_range"]),
        grid_class=table["grid_class"],
        alpha_deg=float(table["alpha_deg"]),
        printed=dict(table.get("printed", {})),
        exact=exact,
        s=s,
    )


_CACHE: dict[str, PeerTriplet] = {}


def build_triplet(name):
    """Return the triplet called ``name`` (``AP4o33vgi`` or ``AP4o33vsi``)."""
    if isinstance(name, PeerTriplet):
        return name
    if name not in _TABLES:
        raise KeyError(f"unknown triplet {name!r}; known triplets: {', '.join(known_triplets())}")
    if name not in _CACHE:
        _CACHE[name] = _build(name, _TABLES[name])
    return _CACHE[name]


# -- JSON round trip -------------------------------------------------------------

def _fstr(x):
    return str(x)


def _rows(M):
    return [[float(v) for v in row] for row in np.asarray(M)]


def triplet_to_dict(triplet):
    """Serializable view; floats are exact reprs, ``exact`` holds ratios."""
    ex = triplet.exact
    doc = {
        "name": triplet.name,
        "s": triplet.s,
        "q": triplet.q,
        "c": [float(x) for x in triplet.c],
        "K_diag": [float(x) for x in triplet.kappa],
        "A": _rows(triplet.A),
        "A0": _rows(triplet.A0),
        "AN": _rows(triplet.AN),
        "At0": _rows(triplet.At0),
        "AtN": _rows(triplet.AtN),
        "a": [float(x) for x in triplet.a],
        "w": [float(x) for x in triplet.w],
        "Bhat": [
            {"row": i, "col": j, "coeffs": {str(p): _fstr(v) for p, v in sorted(co.items())}}
            for (i, j), co in sorted(triplet.bhat.items())
        ],
        "W": _rows(triplet.W) if triplet.W is not None else None,
        "metadata": {
            "sigma_range": list(triplet.sigma_range),
            "grid_class": triplet.grid_class,
            "alpha_deg": triplet.alpha_deg,
            "printed": triplet.printed,
        },
    }
    if ex:
        doc["exact"] = {
            k: (None if v is None else
                [[_fstr(x) for x in row] for row in v] if isinstance(v[0], list)
                else [_fstr(x) for x in v])
            for k, v in ex.items()
        }
    return doc


def triplet_from_dict(doc):
    """Inverse of :func:`triplet_to_dict`.

    Float fields win over the ``exact`` block so that an edited coefficient
    file is taken at face value (``a`` and ``w`` are read, not recomputed).
    """
    def arr(key):
        return _frozen(doc[key])

    exact = {}
    if doc.get("exact"):
        for k, v in doc["exact"].items():
            if v is None:
                exact[k] = None
            elif isinstance(v[0], list):
                exact[k] = [[Fraction(x) for x in row] for row in v]
            else:
                exact[k] = [Fraction(x) for x in v]
    bhat = {(e["row"], e["col"]): {int(p): Fraction(v) for p, v in e["coeffs"].items()}
            for e in doc["Bhat"]}
    meta = doc.get("metadata", {})
    return PeerTriplet(
        name=doc["name"],
        c=arr("c"),
        kappa=arr("K_diag"),
        A=arr("A"),
        A0=arr("A0"),
        AN=arr("AN"),
        At0=arr("At0"),
        AtN=arr("AtN"),
        a=arr("a"),
        w=arr("w"),
        bhat=bhat,
        W=_frozen(doc["W"]) if doc.get("W") is not None else None,
        sigma_range=tuple(meta.get("sigma_range", (1.0, 1.0))),
        grid_class=meta.get("grid_class", "general"),
        alpha_deg=float(meta.get("alpha_deg", 0.0)),
        printed=dict(meta.get("printed", {})),
        exact=exact,
        s=int(doc.get("s", 4)),
        q=int(doc.get("q", 3)),
    )


def dump_coefficients(triplet, path=None):
    text = json.dumps(triplet_to_dict(build_triplet(triplet)), indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def load_coefficients(path):
    with open(path) as fh:
        return triplet_from_dict(json.load(fh))
