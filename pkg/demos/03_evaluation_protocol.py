"""The evaluation protocol: success rate, distortion, and the operating
characteristic.

A fair attack benchmark only counts images the classifier got right in
the first place.  Over that set we report P_suc (fraction beaten), the
mean distortion of the successes, and the full operating characteristic
P(D) — the fraction beaten within any distortion budget D.  Budget-capped
attacks are run at several budgets and merged per image (best success,
smallest distortion), which can only improve on any single run.
"""

from _common import demo_dataset, demo_model, out_dir
from smoothadv import (
    AttackConfig,
    attack_with_epsilon,
    emit_report,
    evaluate_attack,
    make_attack,
    merge_multi_epsilon,
    operating_characteristic,
)

out = out_dir("03-evaluation-protocol")
dataset = demo_dataset()
model = demo_model(dataset)
_, _, test_x, test_y = dataset
images, labels = test_x[:30], test_y[:30]

# ---------------------------------------------------------------------------
# One quick attack, then an L2 attack swept over budgets and merged.
# ---------------------------------------------------------------------------

reports = []

quick = make_attack(model, AttackConfig(kind="fgsm", epsilon=0.25))
reports.append(evaluate_attack(model, quick, images, labels, name="fgsm[eps=0.25]"))

base = AttackConfig(kind="pgd2", epsilon=2.0, step=1.2, iterations=60)
sweep = []
for eps in (2.0, 5.0):
    attack = make_attack(model, attack_with_epsilon(base, eps))
    sweep.append(evaluate_attack(model, attack, images, labels, name=f"pgd2[eps={eps:g}]"))
reports.extend(sweep)
merged = merge_multi_epsilon(sweep)
merged.attack = "pgd2+merged"
reports.append(merged)

print(f"\n{'attack':<18} {'N':>3} {'P_suc':>6} {'mean distortion':>16}")
for report in reports:
    mean = "-" if report.mean_distortion is None else f"{report.mean_distortion:.3f}"
    print(f"{report.attack:<18} {report.correctly_classified:>3} {report.p_suc:>6.2f} {mean:>16}")

# ---------------------------------------------------------------------------
# The operating characteristic of the merged run, sampled at round budgets.
# ---------------------------------------------------------------------------

print("\nmerged operating characteristic P(D):")
for budget in (0.5, 1.0, 2.0, 3.0, 5.0):
    print(f"  P({budget:g}) = {operating_characteristic(merged, budget):.2f}")

for report in reports:
    csv_path, json_path = emit_report(report, out / report.attack.replace("[", "-").replace("]", ""))
print(f"\nper-image CSVs and JSON summaries written to {out}")
