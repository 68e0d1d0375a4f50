"""Gap decomposition, preference bound and the degraded-retrieval regime on small worlds.

Prints, for a handful of random miscalibrated worlds, the three gap terms
next to the preference bound; then builds worlds where retrieval is thinned
only on majority-heavy contexts and reports eps, the sup-utility gap and
eps * min alpha*(1).
"""
import numpy as np

from sysfair.metrics import decompose_gap, theorem1_bound, theorem2_check
from sysfair.pipeline import RetrievalPolicy
from sysfair.worldgen import WorldConfig, generate_world, world_from_arrays


def random_world(rng, kappa):
    X = 6
    cd = [tuple(v / v.sum()) for v in rng.dirichlet(np.ones(X), size=2)]
    cd = [tuple(np.r_[r[:-1], 1 - sum(r[:-1])]) for r in cd]
    cfg = WorldConfig(X, 30, 2, (0.8, 0.2), cd, rng.uniform(0.05, 1, (2, 2)), miscalibration=kappa,
                      seed=int(rng.integers(2**32)))
    return generate_world(cfg)


def degraded_world(rng, X=6, M=30, m=5, n_good=2):
    p = np.full((X, M, 2), 0.1)
    for x in range(X):
        p[x, rng.choice(M, n_good, replace=False)] = 0.9
    heavy = np.r_[np.full(X // 2, 0.3), np.full(X - X // 2, 0.1 / (X - X // 2))]
    cd1 = heavy / heavy.sum()
    cd0 = cd1[::-1].copy()
    cfg = WorldConfig(X, M, 2, (0.8, 0.2), (tuple(cd0), tuple(cd1)), rng.uniform(0.1, 1, (2, 2)))
    policy = RetrievalPolicy.group_degraded(m, range(X // 2, X), 0.05, seed=int(rng.integers(2**31)))
    return world_from_arrays(cfg, p), policy


def main():
    rng = np.random.default_rng(0)
    print("kappa   shift_1   pref      shift_2   total     bound")
    for kappa in (0.0, 0.5, 1.0, 2.0):
        w = random_world(rng, kappa)
        pol = RetrievalPolicy.oracle_top_m(10)
        alpha = rng.random(2)
        d = decompose_gap(w, pol, alpha)
        print(f"{kappa:<7} {d.term_x_shift_1:+.4f}  {d.term_preference:+.4f}  {d.term_x_shift_2:+.4f}  "
              f"{d.total_gap:+.4f}  {theorem1_bound(w, pol, alpha):.4f}")

    print("\neps      sup_gap   bound     satisfied")
    for _ in range(5):
        r = theorem2_check(*degraded_world(rng), epsilon_target=0.05)
        print(f"{r.epsilon:.4f}   {r.sup_difference:.4f}    {r.bound:.4f}    {r.satisfied}")


if __name__ == "__main__":
    main()
