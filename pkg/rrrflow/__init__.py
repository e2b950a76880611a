"""rrrflow - numerical laboratory for the Reflect-Reflect-Relax iteration and its flow limit"""

__version__ = '0.1.0'
__author__ = 'Dih5 <dihedralfive@gmail.com>'

from .context import *
from .exceptions import *
from .sets import *
from .flow import *
from .linearize import *
from .wdomains import *
from .meso import *
from .ledm import *
from .instances import get_instance, instance_names, feasible_point
