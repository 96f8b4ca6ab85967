"""
Files and the command line
==========================

Datasets and checkpoints have compact binary formats with a magic tag,
a version and (for checkpoints) a checksum.  The same pipeline is
available as the ``svrnn`` command; this script drives it in-process.
"""

import os
import tempfile

from svrnn import cli
from svrnn.persistence import read_dataset

out = tempfile.mkdtemp()
os.environ[cli.OUTPUT_ENV] = out
small = ["--pool-count", "20", "--grid-side", "8", "--nd", "10", "--n-s", "20", "--epochs", "5"]

cli.main(["gen-pool", *small])
cli.main(["make-dataset", "--pool", f"{out}/pool.svtf", *small])
cli.main(["gen-support", "--pool", f"{out}/pool.svtf", *small])
cli.main(["train", "--model", "svrnn", "--data", f"{out}/train.svtf", "--support", f"{out}/support.svtf", *small])
cli.main(["sample", "--checkpoint", f"{out}/svrnn_final.ckpt", "--count", "50", *small])
cli.main(["eval", "--pool", f"{out}/pool.svtf", "--generated", f"S-VRNN={out}/generated_svrnn.svtf", *small])

print(read_dataset(f"{out}/generated_svrnn.svtf").metadata)

# a contract violation exits non-zero with one JSON line on stderr
code = cli.main(["train", "--model", "vrnn", "--data", f"{out}/train.svtf", "--support", f"{out}/support.svtf",
                 *small])
print("exit code:", code)
