"""Control-plane services: API front end, lifecycle manager, crashable hosts."""

from trainyard.services.api import ApiService
from trainyard.services.hosts import ServiceHost
from trainyard.services.http import HttpGateway, serve
from trainyard.services.lcm import LifecycleManager

__all__ = ["ApiService", "HttpGateway", "LifecycleManager", "ServiceHost", "serve"]
