"""Multi-domain task-oriented dialogue policies trained as a network of
per-domain deep Q-learners over raw-text state features."""

__version__ = "0.1.0"
