"""Pure-Python kernels; the compiled module must reproduce these draw for draw."""

from __future__ import annotations

import math

import numpy as np


def lucb_run(theta, flip, counts, sums, order, m, n_beta, delta, t, t_step, eps_stop, u):
    """Run LUCB iterations on pre-drawn uniforms.

    Each iteration ranks arms by empirical mean (ties by index), picks the
    weakest upper-set arm by lower confidence bound and the strongest
    lower-set arm by upper confidence bound, checks the stopping rule when
    ``eps_stop >= 0``, then pulls both.  ``counts`` and ``sums`` are updated in
    place; ``order`` receives the final ranking.  Returns ``(t, used, stopped)``
    where ``used`` is the number of uniforms consumed.
    """
    n = theta.shape[0]
    idx = np.arange(n)
    nb = float(n_beta)
    used, total = 0, u.shape[0]
    stopped = False
    while True:
        means = sums / counts
        rank = np.lexsort((idx, -means))
        upper = np.sort(rank[:m])
        lower = np.sort(rank[m:])
        tt = float(t)
        tt = tt * tt
        sl = math.sqrt(math.log(5.0 * nb * tt * tt / (4.0 * delta)))
        rad = np.sqrt(0.5 / counts)
        bu = sl * rad[upper]
        bl = sl * rad[lower]
        k = int(np.argmin(means[upper] - bu))
        h, beta_h = int(upper[k]), float(bu[k])
        k = int(np.argmax(means[lower] + bl))
        low, beta_l = int(lower[k]), float(bl[k])
        if eps_stop >= 0.0 and (means[low] + beta_l) - (means[h] - beta_h) < eps_stop / 2.0:
            stopped = True
            break
        if used + 2 > total:
            break
        for arm in (h, low):
            r = int(u[used] < theta[arm]) ^ int(flip)
            counts[arm] += 1
            sums[arm] += r
            used += 1
        t += t_step
    order[:] = np.lexsort((idx, -(sums / counts)))
    return t, used, stopped


def _draw(gen, count, p, flip, normal_var):
    if count == 0:
        return 0
    var = float(count) * p * (1.0 - p)
    if var >= normal_var:
        z = gen.standard_normal()
        s = math.floor(float(count) * p + math.sqrt(var) * z + 0.5)
        s = min(max(s, 0), count)
    else:
        s = int(gen.binomial(count, p))
    return count - s if flip else s


def subset_best_arm_batch(gen, theta, flip, incl_p, K, rounds, delta, budget, beta, copies, normal_var,
                          counts_out, rewards_out):
    """Run ``copies`` independent subsample-then-best-arm copies.

    Per copy: keep each arm with probability ``incl_p`` (a binomial size, then
    Floyd sampling), draw the budget ``budget`` or ``floor(budget / beta)`` with
    equal odds, run successive halving with half of it over at most ``rounds``
    rounds, and verify the winner with the other half.  Reward sums of all
    agents for an arm are drawn as one merged sum.  ``counts_out`` (shape
    ``(rounds + 1, K, n)``) and ``rewards_out`` (``(rounds + 1, n)``) accumulate
    the per-round charges.  Returns the arm per copy (``-1`` for no answer) and
    the budget branch per copy.
    """
    n = theta.shape[0]
    arms_out = np.full(copies, -1, dtype=np.int64)
    branch_out = np.zeros(copies, dtype=np.int8)
    cnt = np.zeros(n, dtype=np.int64)
    sm = np.zeros(n, dtype=np.int64)
    for c in range(copies):
        k = int(gen.binomial(n, incl_p))
        chosen = set()
        for j in range(n - k, n):
            t = int(gen.random() * float(j + 1))
            chosen.add(j if t in chosen else t)
        V = sorted(chosen)
        if gen.random() < 0.5:
            tau = int(budget)
        else:
            tau = math.floor(float(budget) / beta)
            branch_out[c] = 1
        if k == 0:
            continue
        if k == 1:
            arms_out[c] = V[0]
            continue
        half = tau // 2
        per_round = half // rounds
        sizes = []
        s = k
        while s > 1 and len(sizes) < rounds:
            sizes.append(s)
            s = (s + 1) // 2
        if any(per_round // s == 0 for s in sizes):
            continue
        for a in V:
            cnt[a] = 0
            sm[a] = 0
        alive = V
        winner = -1
        for j, s in enumerate(sizes):
            per_agent = per_round // s
            for a in alive:
                x = _draw(gen, K * per_agent, theta[a], flip, normal_var)
                cnt[a] += K * per_agent
                sm[a] += x
                counts_out[j, :, a] += per_agent
                rewards_out[j, a] += x
            ranked = sorted(alive, key=lambda a: (-(sm[a] / cnt[a]), a))
            if j == len(sizes) - 1:
                winner = ranked[0]
            else:
                alive = sorted(ranked[: (s + 1) // 2])
        vr = len(sizes)
        est = {a: sm[a] / cnt[a] for a in V}
        rival = max((a for a in V if a != winner), key=lambda a: (est[a], -a))
        gaps = {a: est[winner] - est[a] for a in V if a != winner}
        gaps[winner] = est[winner] - est[rival]
        if any(g <= 0.0 for g in gaps.values()):
            continue
        gamma = math.log(k / delta)
        need = {}
        total = 0.0
        for a in V:
            need_f = float(math.ceil(64.0 * gamma / (gaps[a] * gaps[a])))
            need[a] = need_f
            total += need_f
        if total > float(K) * float(half):
            continue
        need = {a: int(v) for a, v in need.items()}
        off = 0
        hat = {}
        for a in V:
            ca = need[a]
            base, rem = divmod(ca, K)
            for ag in range(K):
                counts_out[vr, ag, a] += base + (1 if (ag - off) % K < rem else 0)
            off = (off + ca) % K
            x = _draw(gen, ca, theta[a], flip, normal_var)
            rewards_out[vr, a] += x
            hat[a] = float(x) / float(ca)
        lhs = hat[winner] - gaps[winner] / 4.0
        rhs = max(hat[a] + gaps[a] / 4.0 for a in V if a != winner)
        if lhs > rhs:
            arms_out[c] = winner
    return arms_out, branch_out
