"""Time the compiled kernels against the numpy fallback on one desk-scale layout.

    python benchmarks/bench_kernels.py [--area 300] [--n-bs 64] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mmshare import association as A
from mmshare import kernels, metrics as M
from mmshare.channel import sample_network_channels
from mmshare.topology import ScenarioConfig, sample_topology


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--area", type=float, default=300.0, help="square side in meters")
    ap.add_argument("--n-bs", type=int, default=64, help="BS antennas")
    ap.add_argument("--n-ue", type=int, default=16, help="UE antennas")
    ap.add_argument("--samples", type=int, default=20, help="fading samples")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if kernels._compiled is None:
        print("compiled extension not built; only the python backend is available")
    cfg = ScenarioConfig(area_side=args.area, n_bs_antennas=args.n_bs, n_ue_antennas=args.n_ue,
                         n_fading_samples=args.samples)
    topo = sample_topology(cfg, args.seed)
    ch = sample_network_channels(topo, cfg, args.seed)
    inst = A.build_instance(A.ProblemSpec.build("P1", cfg), topo, ch, cfg)
    assign = A.greedy_association(inst)
    mu, mp = A._candidate_moves(inst, assign, np.arange(topo.n_ue))
    state = inst.analog_state(assign)
    print(f"{topo.n_bs} BSs, {topo.n_ue} UEs, {len(inst.pairs)} candidate pairs, "
          f"{len(mu)} candidate moves, {cfg.n_fading_samples} samples")

    backends = ["python"] + (["compiled"] if kernels._compiled is not None else [])
    results = {}
    for name in backends:
        gains = M.analog_gains(topo, ch, cfg, inst.pairs, backend=name)
        t_gain = best_of(lambda: M.analog_gains(topo, ch, cfg, inst.pairs, backend=name),
                         args.repeat)
        util = M.candidate_utilities(gains, state, inst.solve_mask, topo.ue_operator, inst.bw,
                                     inst.noise, cfg.tx_power, mu, mp, inst.n_ops, name)
        t_cand = best_of(lambda: M.candidate_utilities(
            gains, state, inst.solve_mask, topo.ue_operator, inst.bw, inst.noise,
            cfg.tx_power, mu, mp, inst.n_ops, name), args.repeat)
        t_solve = best_of(lambda: A.solve("P1", topo, ch, cfg, backend=name), 1)
        results[name] = (t_gain, t_cand, t_solve, gains.C, util)

    print(f"{'backend':10s} {'pair gains':>12s} {'move scores':>12s} {'P1 solve':>10s}")
    for name, (t_gain, t_cand, t_solve, _, _) in results.items():
        print(f"{name:10s} {t_gain:11.3f}s {t_cand:11.4f}s {t_solve:9.2f}s")
    if len(results) == 2:
        py, cc = results["python"], results["compiled"]
        print(f"{'speedup':10s} {py[0] / cc[0]:11.1f}x {py[1] / cc[1]:11.1f}x "
              f"{py[2] / cc[2]:9.1f}x")
        print(f"max |dC| {np.max(np.abs(py[3] - cc[3])):.2e}, "
              f"max |d utility| {np.max(np.abs(py[4] - cc[4])):.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
