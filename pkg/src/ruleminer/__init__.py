"""Induction of finite-state program-analysis rules from labeled path strings.

Pipeline: sample or trace labeled path words, train a small recurrent binary
classifier, crystallize a state machine out of its hidden-state dynamics, and
score the result against a reference language with a sampled edit-distance
dissimilarity.
"""

__version__ = "0.1.0"
