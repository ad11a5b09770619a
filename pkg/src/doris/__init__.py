"""Depression screening over social-media post histories.

Medically grounded features (symptom annotation against the nine diagnostic
criteria, mood-course summaries, post-history embeddings) feed a calibrated
gradient-boosted-tree classifier; every external model call sits behind a
pluggable, cacheable provider so the whole pipeline runs offline and
deterministically.
"""

__version__ = "0.1.0"
