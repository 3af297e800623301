"""Comparing training-data variants the way the method is meant to be judged.

Trains the same SR architecture on (a) plain bicubic pairs and (b) pairs
whose LR side was translated into the corrupted source domain, then scores
both against corrupted references. With the translated data the model
should sit closer to the source characteristics on the perceptual axis.

Reduced sizes keep this to several minutes of CPU time; the acceptance
suite runs the full desk-scale version. Run:
    python demos/05_ablation.py
"""

import os

from fssr.experiments import ExperimentPlan, run_ablation

OUT = os.path.join(os.path.dirname(__file__), "output", "05_ablation")

plan = ExperimentPlan(
    corruption="noise8",
    setting="sdsr",
    dataset_variants=("bicubic", "dsgan"),
    sr_variants=("frequency_separated",),
    seeds=(0,),
    corpus_images=12,
    corpus_size=128,
    val_images=4,
    dsgan_config={"iterations": 150, "batch_size": 8, "gen_blocks": 4,
                  "gen_features": 32, "disc_plan": (32, 64, 128, 1)},
    sr_config={"iterations": 150, "warmup_pixel_iters": 75, "batch_size": 4,
               "gen_blocks": 4, "gen_features": 32, "disc_plan": (16, 32, 64, 1)},
)

print("running reduced ablation (two dataset variants, one seed) ...")
report = run_ablation(plan, OUT)

print(f"\n{'dataset':<10} {'psnr':>8} {'ssim':>8} {'perceptual':>12} {'hf_std':>8}")
for row in report.rows:
    print(f"{row['dataset']:<10} {row['psnr']:>8.2f} {row['ssim']:>8.4f} "
          f"{row['perceptual']:>12.5f} {row['hf_std']:>8.4f}")
for claim in report.claims:
    print(f"\nclaim: perceptual({claim['better']}) {claim['relation']} "
          f"perceptual({claim['worse']}) -> median holds: {claim['median_holds']}")
print(f"\nreport and crop mosaics under {OUT}")
