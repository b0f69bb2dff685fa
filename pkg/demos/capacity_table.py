"""How the eavesdropper eats into the download rate.

Prints capacity and the minimum shared randomness for a few server counts,
next to the rate of a colluding-only scheme (E=0).

    python3 demos/capacity_table.py
"""

from etpir.plan import capacity, rho_min

K = 3
print(f"K={K} messages\n")
print(f"{'N':>2} {'T':>2} {'E':>2}  {'capacity':>10}  {'E=0 rate':>10}  {'rho_min':>8}")
for N in (3, 4, 5, 6):
    for T in range(1, N):
        for E in range(1, N):
            print(f"{N:>2} {T:>2} {E:>2}  {str(capacity(K, N, T, E)):>10}  "
                  f"{str(capacity(K, N, T, 0)):>10}  {str(rho_min(K, N, T, E)):>8}")
    print()

print("once E >= T the rate no longer depends on K:",
      {K: str(capacity(K, 5, 2, 3)) for K in (1, 2, 5, 9)})
