"""Semantic, attribute-authorized ranked search over encrypted outsourced documents.

Layers, bottom up: :mod:`esas.group` (pairing facade, KDF, AEAD),
:mod:`esas.cpabe` (access-tree key encapsulation), :mod:`esas.knnse`
(secure inner-product index and trapdoors), :mod:`esas.semantic`
(triples, vocabulary, vectors), :mod:`esas.entities` (the six protocol roles
over a workspace) and :mod:`esas.cli`.
"""

__version__ = "0.1.0"
