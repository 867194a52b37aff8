"""White-box adversarial attacks and defenses for speaker identification on raw audio."""

__version__ = "0.1.0"
