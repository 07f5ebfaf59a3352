"""pocmill: mine DBMS bug reports into a corpus of executable SQL test cases.

The pipeline runs in stages: collect reports into a corpus, scan their
bodies for PoC fragments, extract raw PoCs with a (mockable) text-generation
client, adapt them into constraint-checked test cases against an execution
harness, then export seeds or replay them across versions and engines.
"""

__version__ = "0.1.0"
