import re

import numpy as np
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from _instances import random_lp, random_milp
from scenplan.milp import LpProblem, MilpProblem, format_lp, write_lp

_TERM = re.compile(r"([+-]?)\s*(\S+) x(\d+)")


def parse_expr(text, n):
    coef = np.zeros(n)
    text = text.strip()
    if not text.startswith("-"):
        text = "+ " + text
    for sign, num, j in _TERM.findall(text):
        v = float(num)
        coef[int(j)] += -v if sign == "-" else v
    return coef


def parse_lp(text, n):
    """Minimal reader for the dump grammar; returns an LpProblem and the binary set."""
    lines = text.splitlines()
    assert lines[0].startswith("\\ ") and lines[1] == "Minimize" and lines[-1] == "End"
    section, c = None, None
    rows, senses, rhs, binaries = [], [], [], []
    lo, hi = np.full(n, np.nan), np.full(n, np.nan)
    for ln in lines[1:-1]:
        if ln in ("Minimize", "Subject To", "Bounds", "Binary"):
            section = ln
            continue
        body = ln.strip()
        if section == "Minimize":
            c = parse_expr(body.split(":", 1)[1], n)
        elif section == "Subject To":
            expr = body.split(":", 1)[1]
            m = re.match(r"(.*) (<=|>=|=) (\S+)$", expr)
            rows.append(parse_expr(m.group(1), n))
            senses.append({"=": "=="}.get(m.group(2), m.group(2)))
            rhs.append(float(m.group(3)))
        elif section == "Bounds":
            if body.endswith(" free"):
                j = int(body[1:].split()[0])
                lo[j], hi[j] = -np.inf, np.inf
            elif body.startswith("-inf <= "):
                _, _, name, _, h = body.split()
                lo[int(name[1:])], hi[int(name[1:])] = -np.inf, float(h)
            elif " >= " in body:
                name, _, l_ = body.split()
                lo[int(name[1:])], hi[int(name[1:])] = float(l_), np.inf
            else:
                l_, _, name, _, h = body.split()
                lo[int(name[1:])], hi[int(name[1:])] = float(l_), float(h)
        elif section == "Binary":
            binaries.append(int(body[1:]))
    A = np.array(rows).reshape(len(rows), n)
    return LpProblem(c, sp.csr_matrix(A), senses, rhs, lo, hi), binaries


def same(a: LpProblem, b: LpProblem):
    return (np.array_equal(a.c, b.c) and np.array_equal(a.A.toarray(), b.A.toarray())
            and list(a.senses) == list(b.senses) and np.array_equal(a.rhs, b.rhs)
            and np.array_equal(a.lo, b.lo) and np.array_equal(a.hi, b.hi))


@given(st.integers(0, 2**31))
def test_lp_round_trip(seed):
    p = random_lp(np.random.default_rng(seed))
    q, binaries = parse_lp(format_lp(p), p.n_vars)
    assert same(p, q) and binaries == []


@given(st.integers(0, 2**31))
def test_milp_round_trip(seed):
    p = random_milp(np.random.default_rng(seed))
    q, binaries = parse_lp(format_lp(p, comment="round trip"), p.base.n_vars)
    assert same(p.base, q)
    assert binaries == list(p.binaries)


def test_sections_and_file(tmp_path):
    p = LpProblem.from_rows([0.0, 0.0], [([0.0, 0.0], "<=", 1.0)], bounds=[(-np.inf, np.inf), (0, 1)])
    text = format_lp(MilpProblem(p, [1]))
    assert " obj: 0 x0" in text and " c0: 0 x0 <= 1.0" in text and " x0 free" in text
    assert text.index("Binary") < text.index("End")
    write_lp(p, tmp_path / "p.lp")
    assert (tmp_path / "p.lp").read_text() == format_lp(p)
