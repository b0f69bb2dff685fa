"""Run real sockets and let an eavesdropper copy two of the five streams.

Each server listens on 127.0.0.1. The tap duplicates every frame sent on
the chosen links, then the rank test is run on the captured queries.

    python3 demos/tapped_loopback.py
"""

import numpy as np

from etpir.audit import check_security
from etpir.net import captured_queries, deploy, retrieve
from etpir.plan import SchemeParams, derive_counts

p = SchemeParams(2, 5, 3, 2)
W = p.field.random(np.random.default_rng(0), (p.K, derive_counts(p).L))

with deploy(p, W, mode="tcp_loopback", seed=2024) as dep:
    print("servers at", ", ".join(f"{h}:{port}" for h, port in dep.addresses))
    dep.tap((2, 4))
    res = retrieve(dep, 1, np.random.default_rng(1))
    print(f"retrieved W_1 correctly: {res.ok and res.message.tolist() == W[0].tolist()}")
    print(f"download {res.download} symbols for {len(res.message)} message symbols")
    for n, log in sorted(dep.taps.items()):
        sizes = {kind: sum(len(b) for k, b in log if k == kind) for kind in ("query", "answer")}
        print(f"link to server {n}: copied {sizes['query']} query bytes and {sizes['answer']} answer bytes")
    v = check_security(dep.scheme, captured_queries(dep), (2, 4))
    print(f"eavesdropper view: rank[M_W|M_S]={v.witness['joint_rank']}, rank M_S={v.witness['noise_rank']}"
          f" -> {'nothing' if v.passed else 'something'} learned about the database")
