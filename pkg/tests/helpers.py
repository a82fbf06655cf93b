"""Shared builders for the single-tier setups the tests keep reusing."""
import math

from mmwcov.analysis import Scenario
from mmwcov.channel import (AntennaPattern, RadioConfig, MMWAVE_28GHZ,
                            MMWAVE_73GHZ, UWAVE_2_5GHZ)

RADIO = RadioConfig(tx_power_dbm=30.0, bandwidth_hz=2e9, noise_figure_db=10.0)
UWAVE_RADIO = RadioConfig(tx_power_dbm=30.0, bandwidth_hz=40e6,
                          noise_figure_db=10.0)

BS20 = AntennaPattern.from_db(20.0, -10.0, 30.0)
MT20 = AntennaPattern.from_db(20.0, -10.0, 30.0)
OMNI = AntennaPattern.from_db(0.0, 0.0, 360.0)


def density(cell_radius):
    return 1.0 / (math.pi * cell_radius * cell_radius)


def single(preset=MMWAVE_28GHZ, cell_radius=150.0, bs=BS20, mt=MT20,
           radio=RADIO, **kw):
    return Scenario.single_tier(preset, radio, bs, mt,
                                cell_radius=cell_radius, **kw)
