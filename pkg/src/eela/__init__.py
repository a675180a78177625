"""Energy-efficient localization for mobile underwater sensor networks.

Anchor and sensor nodes pick transmit powers through a leader/follower
game; ``eela.engine`` simulates the message exchange over an acoustic
channel and ``eela.bench`` turns runs into CSV reports.
"""

import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"
