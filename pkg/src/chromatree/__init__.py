"""Lock-free chromatic search tree on multi-word LLX/SCX primitives.

Subpackages:

- mwcas_primitives: LLX/SCX/VLX over records with word-sized mutable fields
- update_template: generic tree-update engine plus argument validation
- chromatic_tree: the relaxed-balance concurrent ordered map
- verification: oracles, linearizability checking, auditors, schedule explorer
- bench_cli: throughput benchmark command line
"""

__all__ = ["ChromaticMap"]


def __getattr__(name):
    if name == "ChromaticMap":
        from chromatree.chromatic_tree import ChromaticMap
        return ChromaticMap
    raise AttributeError(name)
