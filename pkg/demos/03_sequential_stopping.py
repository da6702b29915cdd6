"""Sequential stopping: trade answer quality against probing cost.

Instead of running for a fixed horizon, a sequential test keeps probing
until its belief is confident enough, then commits.  Two stop statistics
are built in for the exact-belief baseline:

- `belief`: stop once the posterior error gamma_t = 1 - max rho drops
  below the threshold c (the default; its error tracks c tightly);
- `ll`: the classical rule, stop once the leading hypothesis out-scores
  the runner-up by ln(1/c) in cumulative log-likelihood.  Likelihood
  ratios move in coarse jumps in a binary-alphabet environment, so this
  rule overshoots loose thresholds.

Both are capped at 50 steps.  10000 episodes per setting.
"""

from asht import two_sensor_pair
from asht.evaluation import compare_report, eval_sequential

pair = two_sensor_pair()
thresholds = (0.3, 0.2, 0.1, 0.05)

for rule in ("belief", "ll"):
    print(f"=== stop_rule = {rule} ===")
    print(f"{'c':>6}  {'error':>8}  {'±ci95':>8}  {'mean stop':>9}")
    for c in thresholds:
        s = eval_sequential("chernoff", pair, c=c, t_cap=50, n=10000, seed=42,
                            stop_rule=rule)
        print(f"{c:>6}  {s.error:>8.4f}  {s.error_ci95:>8.4f}  {s.mean_stop_time:>9.2f}")
    print()

print("side-by-side (belief rule), chernoff vs uniform-random prober:")
summaries = []
for agent in ("chernoff", "random"):
    for c in thresholds:
        summaries.append(eval_sequential(agent, pair, c=c, t_cap=50, n=10000, seed=42))
print(compare_report(summaries))
