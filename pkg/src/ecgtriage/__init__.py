"""ECG-based seizure risk tooling.

Two pipelines share this package: a per-event detector that flags ictal
tachycardia from beat-to-beat heart rate, and a patient-level triage model
that scores seizure risk from one hour of ECG plus clinical metadata.
"""

__version__ = "0.1.0"
