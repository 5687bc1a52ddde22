import sys

from neutron_transport.cli import main

sys.exit(main())
