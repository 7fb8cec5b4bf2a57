#
# time.py
#

class DeviceClock:
    def __init__(self, offset: int = 0):
        """
        Local clock of a simulated device, a fixed offset from global logical time
        :param offset: ticks the local clock runs ahead (positive) or behind (negative)
        """
        self.offset = offset

    def local(self, now: int) -> int:
        """
        Returns the local reading of the clock at global tick now
        """
        return now + self.offset

    def to_global(self, local_tick: int) -> int:
        """
        Returns the global tick at which the local clock shows local_tick
        """
        return local_tick - self.offset

    def within(self, epsilon: int) -> bool:
        return abs(self.offset) <= epsilon
