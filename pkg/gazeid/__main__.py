import sys

from gazeid.main import main

sys.exit(main())
