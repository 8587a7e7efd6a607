from dataclasses import dataclass, asdict


@dataclass
class SynthStats:
    frames: int = 0
    detections: int = 0
    dropouts: int = 0
    out_of_fov: int = 0

    def update(self, observation):
        """Update counters based on one frame's observation."""
        self.frames += 1
        status = observation.status
        if status == "detected":
            self.detections += 1
        elif status == "dropout":
            self.dropouts += 1
        elif status == "out_of_fov":
            self.out_of_fov += 1
        return self

    @staticmethod
    def from_observations(observations):
        stats = SynthStats()
        for observation in observations:
            stats.update(observation)
        return stats

    def to_dict(self) -> dict:
        return asdict(self)
