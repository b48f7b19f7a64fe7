"""
Run the CRN spectrum-games FastAPI server
"""
import os

import uvicorn
from dotenv import load_dotenv

load_dotenv()

if __name__ == "__main__":
    uvicorn.run(
        "app.main:app",
        host=os.getenv("CRN_HOST", "0.0.0.0"),
        port=int(os.getenv("CRN_PORT", "8000")),
        reload=True
    )
