"""Desk-scale toolkit for TTS-augmented code-switched speech recognition.

Feature-space mixup of synthetic and real speech, a code-switching reward on
a hybrid CTC/attention loss, and switch-point error rates.
"""

__version__ = "0.1.0"
