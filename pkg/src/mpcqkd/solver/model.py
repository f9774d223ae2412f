"""Generic mixed-integer linear program container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONTINUOUS, INTEGER, BINARY = "C", "I", "B"
LE, GE, EQ = "<=", ">=", "="


@dataclass(frozen=True)
class Program:
    """``maximize objective @ x`` subject to ``A x (senses) rhs``, ``lb <= x <= ub``.

    ``secondary`` is an optional tie-break objective (minimized) used only
    to choose among optimal solutions; it never changes the optimum.
    """

    names: tuple
    lb: np.ndarray
    ub: np.ndarray
    vtype: tuple
    objective: np.ndarray
    A: sp.csr_matrix
    senses: tuple
    rhs: np.ndarray
    row_names: tuple
    secondary: np.ndarray | None = None

    @property
    def n_vars(self):
        return len(self.names)

    @property
    def n_rows(self):
        return len(self.row_names)

    @property
    def integer_mask(self):
        return np.array([t != CONTINUOUS for t in self.vtype], dtype=bool)

    @property
    def binary_mask(self):
        return np.array([t == BINARY for t in self.vtype], dtype=bool)

    def index(self, name):
        lookup = self.__dict__.get("_index")
        if lookup is None:
            lookup = {n: i for i, n in enumerate(self.names)}
            object.__setattr__(self, "_index", lookup)
        return lookup[name]

    def row_index(self, name):
        lookup = self.__dict__.get("_row_index")
        if lookup is None:
            lookup = {n: i for i, n in enumerate(self.row_names)}
            object.__setattr__(self, "_row_index", lookup)
        return lookup[name]

    def integer_only_rows(self):
        """Indices of rows whose every nonzero column is integer or binary."""
        ints = self.integer_mask
        A = self.A
        out = []
        for i in range(self.n_rows):
            cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
            if len(cols) and ints[cols].all():
                out.append(i)
        return out

    def with_bounds(self, lb, ub):
        return Program(self.names, np.asarray(lb, float), np.asarray(ub, float), self.vtype,
                       self.objective, self.A, self.senses, self.rhs, self.row_names,
                       self.secondary)


@dataclass
class ProgramBuilder:
    names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    vtype: list = field(default_factory=list)
    obj: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    _index: dict = field(default_factory=dict)

    def add_var(self, name, lb=0.0, ub=math.inf, vtype=CONTINUOUS, obj=0.0):
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        if vtype == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self._index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.vtype.append(vtype)
        self.obj.append(float(obj))
        return self._index[name]

    def var(self, name):
        return self._index[name]

    def has_var(self, name):
        return name in self._index

    def add_row(self, name, coeffs, sense, rhs):
        """``coeffs`` maps variable index to coefficient; repeats are summed."""
        merged = {}
        for j, a in coeffs:
            merged[j] = merged.get(j, 0.0) + float(a)
        merged = {j: a for j, a in merged.items() if a != 0.0}
        self.rows.append((name, merged, sense, float(rhs)))

    def build(self, secondary=None):
        n = len(self.names)
        indptr = [0]
        indices = []
        data = []
        for _, coeffs, _, _ in self.rows:
            for j in sorted(coeffs):
                indices.append(j)
                data.append(coeffs[j])
            indptr.append(len(indices))
        A = sp.csr_matrix((np.array(data, float), np.array(indices, np.int64),
                           np.array(indptr, np.int64)), shape=(len(self.rows), n))
        sec = None
        if secondary is not None:
            sec = np.zeros(n)
            for j, a in secondary.items():
                sec[j] += a
        row_names = tuple(r[0] for r in self.rows)
        if len(set(row_names)) != len(row_names):
            raise ValueError("duplicate row names")
        return Program(tuple(self.names), np.array(self.lb, float), np.array(self.ub, float),
                       tuple(self.vtype), np.array(self.obj, float), A,
                       tuple(r[2] for r in self.rows), np.array([r[3] for r in self.rows], float),
                       row_names, sec)
