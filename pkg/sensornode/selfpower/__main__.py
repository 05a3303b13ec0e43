#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import sys

from .cli import main

sys.exit(main())
