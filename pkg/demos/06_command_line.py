"""
Command line harness
====================

The same entry point as the ``lprmdp`` script, driven from Python.
"""
import tempfile
from pathlib import Path

from lprmdp.cli import main

work = Path(tempfile.mkdtemp())
main(["gen", "--states", "8", "--actions", "4", "--seed", "42", "--out", str(work / "m.json")])

# equal sample budgets: deterministic under the seed
main(["eval", str(work / "m.json"), "--samples", "2000"])

# equal time: samplers get the bisection's wall time
main(["eval", str(work / "m.json"), "--mode", "equal_time", "--format", "json"])

main(["improve", str(work / "m.json"), "--iters", "5", "--beta", "0.005"])
main(["normbench", "--sizes", "50,200", "--trials", "3"])
