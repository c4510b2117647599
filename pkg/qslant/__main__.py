import sys

from qslant.main import main

sys.exit(main())
