"""Dynamic-graph link prediction toolkit.

Snapshot ingestion, random-walk sampling, a structural + temporal attention
model trained with a skip-gram style objective, evaluation against simple
baselines, and synthetic benchmark generators.  All numerics run on the
package's own reverse-mode autodiff engine.
"""

__version__ = "0.1.0"
