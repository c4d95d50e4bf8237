#!/usr/bin/env python3
"""External LP backend for freightmatch: reads a JSON model on stdin, solves
it with HiGHS through scipy, writes a JSON solution on stdout."""
import json
import sys

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix


def main():
    req = json.load(sys.stdin)
    c = np.asarray(req["objective"], dtype=float)
    n = len(c)
    ub_r, ub_c, ub_v, ub_b = [], [], [], []
    eq_r, eq_c, eq_v, eq_b = [], [], [], []
    for row in req["rows"]:
        rel, rhs = row["relation"], row["rhs"]
        if rel == "=":
            k = len(eq_b)
            for var, coef in row["terms"]:
                eq_r.append(k), eq_c.append(var), eq_v.append(coef)
            eq_b.append(rhs)
        else:
            sign = 1.0 if rel == "<=" else -1.0
            k = len(ub_b)
            for var, coef in row["terms"]:
                ub_r.append(k), ub_c.append(var), ub_v.append(sign * coef)
            ub_b.append(sign * rhs)
    a_ub = coo_matrix((ub_v, (ub_r, ub_c)), shape=(len(ub_b), n)).tocsr() if ub_b else None
    a_eq = coo_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_b), n)).tocsr() if eq_b else None
    bounds = list(zip(req["lower"], req["upper"]))
    res = linprog(c, A_ub=a_ub, b_ub=ub_b or None, A_eq=a_eq, b_eq=eq_b or None,
                  bounds=bounds, method="highs")
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status)
    if status is None:
        print(res.message, file=sys.stderr)
        sys.exit(1)
    out = {"status": status, "values": res.x.tolist() if status == "optimal" else [],
           "iterations": int(getattr(res, "nit", 0) or 0)}
    json.dump(out, sys.stdout)


if __name__ == "__main__":
    main()
