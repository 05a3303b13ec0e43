#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
from .lti import *
from .pid import *
from .stability import *
from .energy import *
from .nodesim import *
from .scenario import *
from .test_helper import *
