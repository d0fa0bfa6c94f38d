import socket

import pytest

from havld.scheduling import available_backends


def free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


@pytest.fixture(params=sorted(available_backends()))
def kernels(request):
    """Run kernel-sensitive tests against every built backend."""
    return available_backends()[request.param]


ORANGE_CONF = """
node primary {
  name = lbnode1.orange.com
  address = 192.168.1.2
  priority = 200
}
node backup {
  name = lbnode2.orange.com
  address = 192.168.1.3
  priority = 100
}
heartbeat {
  interval_s = 1
  dead_factor = 3
  port = 539
}
virtual www.orange.com {
  address = 192.168.1.150:80
  scheduler = rr
  server websrv1.orange.com {
    address = 192.168.1.100:80
    weight = 1
  }
  server websrv2.orange.com {
    address = 192.168.1.101:80
    weight = 1
  }
}
"""


@pytest.fixture
def orange_config():
    from havld.config import parse

    return parse(ORANGE_CONF)
