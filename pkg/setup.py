#!/usr/bin/env python3
"""
Setup script for the structural optimizer
Installs dependencies, creates .env and runs a smoke solve
"""

import os
import sys
import subprocess
import shutil
import tempfile

def check_python_version():
    """Check if Python version is compatible"""
    if sys.version_info < (3, 9):
        print("❌ Python 3.9 or higher is required")
        sys.exit(1)
    print(f"✅ Python {sys.version_info.major}.{sys.version_info.minor} detected")

def install_dependencies(dev: bool = False):
    """Install Python dependencies"""
    manifest = "requirements-dev.txt" if dev else "requirements.txt"
    print(f"📦 Installing Python dependencies from {manifest}...")
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", manifest])
        print("✅ Dependencies installed successfully")
    except subprocess.CalledProcessError:
        print("❌ Failed to install dependencies")
        sys.exit(1)

def create_env_file():
    """Create .env file from template if it doesn't exist"""
    if os.path.exists('.env'):
        print("✅ .env file already exists")
        return

    if os.path.exists('env.example'):
        shutil.copy('env.example', '.env')
        print("✅ Created .env file from template")
    else:
        print("❌ env.example not found")

def smoke_solve():
    """Generate the axial spring fixture and solve it (u = 2 expected)"""
    print("🔧 Running smoke solve...")
    workdir = tempfile.mkdtemp(prefix="sso_setup_")
    model = os.path.join(workdir, "spring.json")
    cli = [sys.executable, "structural_optimizer.py", "--log-level", "WARNING"]
    try:
        subprocess.check_call(cli + ["fixtures", "spring", "--output", model])
        subprocess.check_call(cli + ["solve", model, "--output-dir", workdir])
    except subprocess.CalledProcessError as e:
        print(f"❌ Smoke solve failed with exit code {e.returncode}")
        return False

    with open(os.path.join(workdir, "u.csv"), "r") as f:
        rows = [line.strip().split(",") for line in f.readlines()[1:]]
    ux = float(rows[1][1])
    if abs(ux - 2.0) > 1e-9:
        print(f"❌ Smoke solve gave u = {ux}, expected 2.0")
        return False
    print(f"✅ Smoke solve OK (u = {ux:.6f}); outputs in {workdir}")
    return True

def main():
    """Main setup function"""
    print("🚀 Setting up the structural optimizer...")
    print()

    check_python_version()
    print()

    install_dependencies(dev="--dev" in sys.argv)
    print()

    create_env_file()
    print()

    if not smoke_solve():
        sys.exit(1)

    print()
    print("🎉 Setup complete!")
    print()
    print("Next steps:")
    print("1. Edit .env to pick the solver backend and thread count")
    print("2. Generate a model: python3 structural_optimizer.py fixtures barrel-arch --output models/barrel.json")
    print("3. Solve it: python3 structural_optimizer.py solve models/barrel.json")
    print("4. Run the tests: pytest (add -m acceptance for the full-scale checks)")

if __name__ == "__main__":
    main()
