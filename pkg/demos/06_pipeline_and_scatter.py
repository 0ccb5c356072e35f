# The whole pipeline through the harness on a toy Geo-query style split,
# followed by evaluation from the checkpoint and a 2-D latent scatter.
# The same steps are available as `mgmae run`, `mgmae eval` and `mgmae plot-latent`.

# %%
import os
import tempfile
from pathlib import Path

from mgmae import harness

work = Path(tempfile.mkdtemp(prefix="mgmae-demo-"))
states = ["texas", "ohio", "utah", "iowa", "maine", "idaho", "kansas", "oregon", "alaska", "nevada"]
rows = []
for s in states:
    rows.append(f"what is the capital of {s} ?\tanswer(capital({s}))\n")
    rows.append(f"how many rivers run through the state of {s} ?\tanswer(count(river(loc({s}))))\n")
(work / "geoquery").mkdir()
(work / "geoquery" / "train.tsv").write_text("".join(rows[:16]))
(work / "geoquery" / "dev.tsv").write_text("".join(rows[16:]))
os.environ[harness.DATA_DIR_ENV] = str(work)

# %% two seeds, two filters, small dimensions
# the dev states never occur in training, so they decode through <unk> and accuracy stays modest
config = harness.ExperimentConfig(embed_dim=16, hidden_dim=24, epochs=15, num_seeds=2, num_filters=2)
report = harness.cmd_run(config, work / "run")
print(report.text())

# %% the checkpoint alone is enough to re-evaluate, here with soft decoding
print(harness.cmd_eval(work / "run" / "seed0.ckpt", decode_mode="soft"))

# %% PCA scatter of the training representations, coloured by mixture component
csv_path, svg_path = harness.export_latent_scatter(work / "run" / "seed0.ckpt", work / "latent")
print("wrote", csv_path, "and", svg_path)
print(csv_path.read_text().splitlines()[:4])
