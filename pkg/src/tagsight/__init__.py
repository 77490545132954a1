"""Vision + RFID sensing toolkit: object identification, pose estimation,
simulated tag sensing and world-frame fusion."""

__version__ = "0.1.0"
