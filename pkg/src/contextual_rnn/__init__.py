"""Train small recurrent sentiment models and reverse-engineer their contextual processing."""

__version__ = "0.1.0"
